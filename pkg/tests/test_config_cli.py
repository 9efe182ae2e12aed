import csv
import json
import os

import numpy as np
import pytest

from geoslice import datasets as ds
from geoslice.cli import main
from geoslice.config import ConfigError, load_config, set_value
from geoslice.io import read_obj, write_vtk
from geoslice.toolpath import PATH_HEADER, read_toolpath


def test_defaults_and_overrides(tmp_path):
    cfg = load_config()
    set_value(cfg, "nozzle.angle=30")
    set_value(cfg, "remesh.enabled=true")
    set_value(cfg, "out=res dir")
    assert cfg["nozzle"]["angle"] == 30 and cfg["remesh"]["enabled"] is True and cfg["out"] == "res dir"
    for bad in ("nozzle=1", "nope.x=1", "interval", "nozzle.size=2"):
        with pytest.raises(ConfigError):
            set_value(load_config(), bad)


def test_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"interval": 2.0, "print": {"mu": 0.9}}))
    cfg = load_config(p)
    assert cfg["interval"] == 2.0 and cfg["print"]["mu"] == 0.9 and cfg["print"]["feed"] == 20.0
    p.write_text(json.dumps({"colour": 1}))
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def _run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_slice_box(tmp_path, capsys):
    code, out, _ = _run(["slice", "--mesh", "fixture:box", "--interval", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert 38 <= man["layer_count"] <= 40
    for name in man["files"]:
        assert (tmp_path / name).exists()
    for e in man["igds"]:
        v, f = read_obj(tmp_path / e["file"])
        assert len(v) == e["vertex_count"] and len(f) == e["triangle_count"]
    rows = list(csv.DictReader((tmp_path / "layer_metrics.csv").open()))
    assert len(rows) == len(man["igds"])
    assert list(rows[0]) == ["i", "j", "avg_overhang_deg", "overhang_ratio", "mean_thickness_mm",
                             "max_thickness_dev_pct"]


def test_slice_from_vtk_file(tmp_path, capsys):
    path = tmp_path / "m.vtk"
    write_vtk(path, ds.make_box_mesh((4, 4, 6), 1.0))
    code, _, _ = _run(["tree", "--mesh", str(path), "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    tree = json.loads((tmp_path / "o" / "tree.json").read_text())
    assert len(tree["edges"]) == len(tree["nodes"]) - 1


def test_missing_mesh(tmp_path, capsys):
    code, _, err = _run(["slice", "--mesh", str(tmp_path / "none.vtk"), "--out", str(tmp_path)], capsys)
    assert code == 2 and "cannot open" in err


def test_zero_interval(tmp_path, capsys):
    code, _, err = _run(["slice", "--mesh", "fixture:box", "--interval", "0", "--out", str(tmp_path)], capsys)
    assert code == 2 and "interval" in err


def test_bad_base_and_set(tmp_path, capsys):
    assert _run(["slice", "--mesh", "fixture:box", "--base", "top", "--out", str(tmp_path)], capsys)[0] == 2
    assert _run(["slice", "--mesh", "fixture:box", "--set", "foo=1", "--out", str(tmp_path)], capsys)[0] == 2
    assert _run(["slice", "--mesh", "fixture:nothing", "--out", str(tmp_path)], capsys)[0] == 2
    assert _run(["slice", "--out", str(tmp_path)], capsys)[0] == 2


def test_explicit_base_indices(tmp_path, capsys):
    m = ds.make_box_mesh((4, 4, 6), 1.0)
    bottom = np.flatnonzero(m.vertices[:, 2] == 0)
    spec = "indices:" + ",".join(map(str, bottom))
    code, _, _ = _run(["slice", "--mesh", "fixture:box", "--base", spec, "--out", str(tmp_path)], capsys)
    assert code == 0


def test_sequence_all_three_branch(tmp_path, capsys):
    code, out, _ = _run(["sequence", "--mesh", "fixture:three-branch", "--strategy", "all",
                         "--nozzle-angle", "75", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = {r["strategy"]: r for r in csv.DictReader((tmp_path / "sequence_metrics.csv").open())}
    assert list(rows) == ["lpt", "dpt", "greedy"]
    r = {k: int(v["retractions"]) for k, v in rows.items()}
    a = {k: float(v["air_move_length_mm"]) for k, v in rows.items()}
    assert r["dpt"] <= r["greedy"] <= r["lpt"] and a["dpt"] <= a["greedy"] <= a["lpt"]
    assert rows["greedy"]["collision_free"] == "true"
    for name in ("lpt", "dpt", "greedy"):
        assert (tmp_path / f"sequence_{name}.json").exists()


def test_deadlock_exit_code(tmp_path, capsys):
    block = tmp_path / "block.json"
    block.write_text(json.dumps({"1_1": ["1_2"], "1_2": ["1_1"]}))
    code, _, err = _run(["sequence", "--mesh", "fixture:two-columns", "--pcs", str(block),
                         "--out", str(tmp_path / "o")], capsys)
    assert code == 3 and "deadlock" in err and "unprinted" in err


def test_toolpath_is_deterministic(tmp_path, capsys):
    runs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert _run(["all", "--mesh", "fixture:disk-stack", "--out", str(out)], capsys)[0] == 0
        runs.append(out)
    names = sorted(os.path.relpath(os.path.join(d, f), runs[0])
                   for d, _, fs in os.walk(runs[0]) for f in fs)
    for n in names:
        assert (runs[0] / n).read_bytes() == (runs[1] / n).read_bytes(), n
    text = (runs[0] / "part.path").read_text()
    assert text.startswith(PATH_HEADER + "\n")
    assert len(read_toolpath(runs[0] / "part.path")) > 0


def test_timings_flag(tmp_path, capsys):
    assert _run(["metrics", "--mesh", "fixture:disk-stack", "--timings", "--out", str(tmp_path)], capsys)[0] == 0
    t = json.loads((tmp_path / "timings.json").read_text())
    assert "field" in t and "metrics" in t


def test_list_fixtures(capsys):
    code, out, _ = _run(["fixtures"], capsys)
    assert code == 0 and "three-branch" in out.split()
