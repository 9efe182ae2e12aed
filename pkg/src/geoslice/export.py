"""File artifacts: layer OBJs, manifest, metric tables."""

import csv
import json
import os

from .io import write_obj

LAYER_METRIC_COLUMNS = ("i", "j", "avg_overhang_deg", "overhang_ratio", "mean_thickness_mm",
                        "max_thickness_dev_pct")


def layer_filename(key):
    i, j = key
    return f"layer_{i:04d}_{j:02d}.obj"


def _r(x, nd=9):
    return round(float(x), nd)


def manifest(layers, files=None):
    """JSON-ready description of a layer set."""
    entries = []
    for s in layers:
        e = {"i": s.layer_index, "j": s.component_index, "phi": _r(s.phi),
             "vertex_count": int(s.surface.n_vertices), "triangle_count": int(s.surface.n_triangles),
             "area": _r(s.area), "centroid": [_r(c) for c in s.centroid]}
        if files is not None:
            e["file"] = files[s.key]
        entries.append(e)
    return {"format": "geoslice-layers v1", "interval": _r(layers.interval),
            "layer_count": layers.n_layers, "igds_count": len(entries), "igds": entries}


def export_layers(layers, out_dir, subdir="layers"):
    """Write one OBJ per surface plus ``manifest.json``; returns the manifest."""
    os.makedirs(os.path.join(out_dir, subdir), exist_ok=True)
    files = {}
    for s in layers:
        rel = os.path.join(subdir, layer_filename(s.key))
        write_obj(os.path.join(out_dir, rel), s.surface)
        files[s.key] = rel
    data = manifest(layers, files)
    write_json(os.path.join(out_dir, "manifest.json"), data)
    return data


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=False)
        fh.write("\n")


def layer_metric_rows(layers, overhang, thickness):
    rows = []
    for s in layers:
        o, t = overhang[s.key], thickness[s.key]
        rows.append({"i": s.layer_index, "j": s.component_index,
                     "avg_overhang_deg": f"{o.avg_angle_deg:.6f}", "overhang_ratio": f"{o.ratio:.6f}",
                     "mean_thickness_mm": f"{t.mean:.6f}",
                     "max_thickness_dev_pct": f"{t.max_deviation_pct:.6f}"})
    return rows


def write_layer_metrics_csv(path, layers, overhang, thickness):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LAYER_METRIC_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(layer_metric_rows(layers, overhang, thickness))
