"""``geoslice`` command line: slice, tree, sequence, toolpath, metrics, all."""

import argparse
import json
import logging
import os
import sys
import time

from .collision import PCSTable
from .config import ConfigError, dump_config, load_config, set_value
from .datasets import FIXTURES, load_fixture
from .exceptions import DeadlockError, GeosliceError, MeshError
from .export import export_layers, manifest, write_json, write_layer_metrics_csv
from .io import FORMATS, load_tet_mesh
from .sequencing import write_metrics_csv
from .slicer import CurvedLayerSlicer, PrintSequencer, ToolpathPlanner

logger = logging.getLogger("geoslice")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DEADLOCK = 0, 1, 2, 3
COMMANDS = ("slice", "tree", "sequence", "toolpath", "metrics", "all")

# flag dest -> dotted config key
_FLAG_KEYS = {
    "mesh": "mesh.path", "format": "mesh.format", "base": "base", "interval": "interval",
    "nozzle_angle": "nozzle.angle", "nozzle_height": "nozzle.height", "strategy": "strategy",
    "stepover": "print.stepover", "filament_radius": "print.filament_radius", "mu": "print.mu",
    "feed": "print.feed", "pcs": "pcs", "out": "out",
}


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("pipeline")
    g.add_argument("--mesh", help="tet mesh file, or fixture:<name> for a built-in mesh")
    g.add_argument("--format", choices=FORMATS, help="mesh format (default: from the extension)")
    g.add_argument("--base", help="'bottom' or 'indices:i,j,...'")
    g.add_argument("--interval", type=float, help="layer spacing d (mm)")
    g.add_argument("--nozzle-angle", type=float, help="nozzle cone half-angle (deg)")
    g.add_argument("--nozzle-height", type=float, help="nozzle cone height (mm)")
    g.add_argument("--strategy", choices=("lpt", "dpt", "greedy", "all"))
    g.add_argument("--stepover", type=float, help="contour spacing l (mm)")
    g.add_argument("--filament-radius", type=float, help="filament radius r_m (mm)")
    g.add_argument("--mu", type=float, help="extrusion coefficient")
    g.add_argument("--feed", type=float, help="print speed f_p (mm/s)")
    g.add_argument("--pcs", help="read the collision table from this JSON instead of computing it")
    g.add_argument("--out", help="output directory")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set field.time_scale=2")
    g.add_argument("--timings", action="store_true", help="also record wall-clock timings")
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="geoslice", description="Curved-layer slicing for multi-axis printing.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"slice": "layers, manifest and layer metrics",
             "tree": "skeleton tree JSON",
             "sequence": "collision table and printing sequence(s)",
             "toolpath": "whole-part path file",
             "metrics": "layer metrics CSV",
             "all": "every artifact"}
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    sub.add_parser("fixtures", help="list built-in meshes")
    return p


def build_config(args):
    cfg = load_config(args.config)
    for dest, key in _FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is not None:
            set_value(cfg, f"{key}={json.dumps(val)}")
    for item in args.set:
        set_value(cfg, item)
    if args.timings:
        cfg["timings"] = True
    if not cfg["mesh"]["path"]:
        raise ConfigError("no mesh given (use --mesh PATH or --mesh fixture:<name>)")
    return cfg


def parse_base(spec):
    if isinstance(spec, list):
        return [int(x) for x in spec]
    spec = str(spec).strip()
    if spec == "bottom":
        return "bottom"
    if spec.startswith("indices:"):
        body = spec[len("indices:"):]
        try:
            idx = [int(x) for x in body.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"bad vertex index list {body!r}") from None
        if not idx:
            raise ConfigError("base index list is empty")
        return idx
    raise ConfigError(f"base must be 'bottom' or 'indices:...', got {spec!r}")


def load_mesh(cfg):
    path = cfg["mesh"]["path"]
    if path.startswith("fixture:"):
        return load_fixture(path[len("fixture:"):])
    try:
        return load_tet_mesh(path, cfg["mesh"]["format"])
    except FileNotFoundError:
        raise ConfigError(f"cannot open mesh {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot open mesh {path}: {exc.strerror}") from None


class Run:
    """One pipeline invocation; stages are computed lazily and cached."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = cfg["out"]
        self.files = []
        self.timings = {}
        self._slicer = self._sequencer = self._planner = None

    def _path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def slicer(self, metrics=True):
        if self._slicer is None or (metrics and not self._slicer.metrics):
            cfg = self.cfg
            mesh = load_mesh(cfg)
            logger.info("mesh: %d vertices, %d tets", mesh.n_vertices, mesh.n_tets)
            rm = cfg["remesh"]
            est = CurvedLayerSlicer(interval=cfg["interval"], base=parse_base(cfg["base"]),
                                    time_scale=cfg["field"]["time_scale"], tol=cfg["field"]["tol"],
                                    boundary=cfg["field"]["boundary"], remesh=bool(rm["enabled"]),
                                    target_edge=rm["target_edge"], remesh_iterations=rm["iterations"],
                                    adjacency=cfg["adjacency"], metrics=metrics)
            self._slicer = est.fit(mesh)
            self.timings.update(est.timings_)
            logger.info("%d layers, %d surfaces", est.layers_.n_layers, len(est.layers_))
        return self._slicer

    def sequencer(self):
        if self._sequencer is None:
            sl = self.slicer(metrics=False)
            nz = self.cfg["nozzle"]
            est = PrintSequencer(strategy=self.cfg["strategy"], nozzle_angle=nz["angle"],
                                 nozzle_height=nz["height"], boundary_samples=nz["boundary_samples"],
                                 envelope_axis=nz["axis"])
            pcs = None
            if self.cfg["pcs"]:
                try:
                    pcs = PCSTable.from_json(self.cfg["pcs"], nodes=sl.tree_.nodes)
                except FileNotFoundError:
                    raise ConfigError(f"cannot open PCS table {self.cfg['pcs']}") from None
            t0 = time.perf_counter()
            self._sequencer = est.fit(sl, pcs=pcs)
            self.timings["pcs"] = est.pcs_.seconds
            self.timings["sequence"] = time.perf_counter() - t0 - est.pcs_.seconds
        return self._sequencer

    def planner(self):
        if self._planner is None:
            sq = self.sequencer()
            pr = self.cfg["print"]
            est = ToolpathPlanner(stepover=pr["stepover"], filament_radius=pr["filament_radius"],
                                  mu=pr["mu"], feed=pr["feed"], travel_clearance=pr["travel_clearance"],
                                  layer_height=pr["layer_height"],
                                  time_scale=self.cfg["field"]["time_scale"])
            t0 = time.perf_counter()
            self._planner = est.fit(self.slicer(metrics=False), sequence=sq.sequence_)
            self.timings["toolpath"] = time.perf_counter() - t0
        return self._planner

    # artifact writers

    def write_layers(self):
        sl = self.slicer()
        data = export_layers(sl.layers_, self.out)
        self.files.extend(e["file"] for e in data["igds"])
        return data

    def write_layer_metrics(self):
        sl = self.slicer(metrics=True)
        write_layer_metrics_csv(self._path("layer_metrics.csv"), sl.layers_, sl.overhang_, sl.thickness_)

    def write_tree(self):
        self.slicer(metrics=False).tree_.to_json(self._path("tree.json"))

    def write_sequence(self):
        sq = self.sequencer()
        sq.pcs_.to_json(self._path("pcs.json"))
        for name, seq in sq.sequences_.items():
            fname = "sequence.json" if len(sq.sequences_) == 1 else f"sequence_{name}.json"
            seq.to_json(self._path(fname))
        write_metrics_csv(list(sq.metrics_.values()), self._path("sequence_metrics.csv"),
                          timings=bool(self.cfg["timings"]))

    def write_toolpath(self):
        self.planner().write(self._path("part.path"))

    def finish(self, layers_info=None):
        if self.cfg["timings"]:
            write_json(self._path("timings.json"), {k: round(v, 4) for k, v in self.timings.items()})
        sl = self._slicer
        data = layers_info if layers_info is not None else (manifest(sl.layers_) if sl else {})
        data = dict(data)
        data["files"] = sorted(set(self.files) | {"manifest.json"})
        write_json(os.path.join(self.out, "manifest.json"), data)
        return data


def _summary(run, command):
    sl = run._slicer
    lines = []
    if sl is not None:
        lines.append(f"layers: {sl.layers_.n_layers}  surfaces: {len(sl.layers_)}  "
                     f"leaves: {len(sl.tree_.leaves)}")
    sq = run._sequencer
    if sq is not None:
        lines.append(f"pcs entries: {sq.pcs_.n_entries}")
        for name, m in sq.metrics_.items():
            lines.append(f"{name}: retractions {m.retraction_count}  air {m.air_move_length:.3f} mm  "
                         f"collision_free {str(m.collision_free).lower()}")
    if run._planner is not None:
        tp = run._planner.toolpath_
        lines.append(f"toolpath: {len(tp)} waypoints  travel moves {tp.travel_move_count}")
    lines.append(f"wrote {len(run.files) + 1} files to {run.out}")
    return "\n".join(lines)


def execute(cfg, command):
    os.makedirs(cfg["out"], exist_ok=True)
    run = Run(cfg)
    info = None
    if command in ("slice", "all"):
        info = run.write_layers()
        run.write_layer_metrics()
    if command == "metrics":
        run.write_layer_metrics()
    if command in ("tree", "sequence", "all"):
        run.write_tree()
    if command in ("sequence", "all"):
        run.write_sequence()
    if command in ("toolpath", "all"):
        run.write_toolpath()
    run.finish(info)
    return run


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "fixtures":
        print("\n".join(sorted(FIXTURES)))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = build_config(args)
        logger.info("config:\n%s", dump_config(cfg))
        run = execute(cfg, args.command)
    except DeadlockError as exc:
        print(f"geoslice: deadlock: {exc}", file=sys.stderr)
        print(f"  printed ({len(exc.printed)}): {exc.printed}", file=sys.stderr)
        print(f"  unprinted ({len(exc.unprinted)}): {exc.unprinted}", file=sys.stderr)
        return EXIT_DEADLOCK
    except (ConfigError, MeshError, ValueError, TypeError) as exc:
        print(f"geoslice: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GeosliceError, OSError) as exc:
        print(f"geoslice: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(_summary(run, args.command))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
