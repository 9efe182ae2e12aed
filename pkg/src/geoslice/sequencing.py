"""Printing orders over the skeleton tree: LPT, DPT and the greedy optimizer."""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import DeadlockError


@dataclass
class PrintSequence:
    order: list
    strategy: str = ""

    def __post_init__(self):
        self.order = [tuple(int(x) for x in k) for k in self.order]

    def __iter__(self):
        return iter(self.order)

    def __len__(self):
        return len(self.order)

    def __getitem__(self, idx):
        return self.order[idx]

    def to_list(self):
        return [{"i": i, "j": j} for i, j in self.order]

    def to_json(self, path=None):
        text = json.dumps(self.to_list(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, path, strategy=""):
        with open(path) as fh:
            return cls([(d["i"], d["j"]) for d in json.load(fh)], strategy)


@dataclass(frozen=True)
class SequenceMetrics:
    retraction_count: int
    air_move_length: float
    collision_free: bool
    strategy: str = ""
    nozzle_angle: float = None
    pcs_seconds: float = 0.0

    def as_row(self):
        return {"strategy": self.strategy,
                "nozzle_angle": "" if self.nozzle_angle is None else f"{self.nozzle_angle:g}",
                "retractions": self.retraction_count,
                "air_move_length_mm": f"{self.air_move_length:.6f}",
                "collision_free": str(bool(self.collision_free)).lower(),
                "pcs_seconds": f"{self.pcs_seconds:.3f}"}


METRIC_COLUMNS = ("strategy", "nozzle_angle", "retractions", "air_move_length_mm", "collision_free",
                  "pcs_seconds")


def write_metrics_csv(metrics, path, timings=True):
    """One row per strategy; ``timings=False`` blanks the wall-clock column."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        w.writeheader()
        for m in metrics:
            row = m.as_row()
            if not timings:
                row["pcs_seconds"] = ""
            w.writerow(row)


@dataclass(frozen=True)
class ValidationReport:
    """Result of :func:`validate_sequence`; ``step`` is 1-based."""

    valid: bool
    step: int = None
    criterion: int = None
    node: tuple = None
    message: str = ""

    def __bool__(self):
        return self.valid


def _centroid(tree, key):
    c = tree.centroids.get(key)
    return None if c is None else np.asarray(c, dtype=float)


def _nearest(tree, current, options):
    """Option closest to ``current`` by centroid distance, ties by key."""
    options = sorted(options)
    if current is None:
        return options[0]
    c0 = _centroid(tree, current)
    if c0 is None:
        return options[0]
    best, best_d = None, np.inf
    for k in options:
        c = _centroid(tree, k)
        dist = np.inf if c is None else float(np.linalg.norm(c - c0))
        if dist < best_d:
            best, best_d = k, dist
    return best if best is not None else options[0]


def lpt(tree):
    """Layer priority traversal: level order, nearest-neighbour within a level."""
    by_layer = {}
    for k in tree.nodes:
        by_layer.setdefault(k[0], []).append(k)
    order, current = [], None
    for i in sorted(by_layer):
        left = list(by_layer[i])
        while left:
            k = _nearest(tree, current, left)
            left.remove(k)
            order.append(k)
            current = k
    return PrintSequence(order, "lpt")


def dpt(tree):
    """Depth priority traversal along branches.

    Children are explored in key order; a merge node is emitted only once
    all of its lower nodes are.
    """
    done = set()
    order = []

    def ready(k):
        return k not in done and all(p in done for p in tree.lower_nodes(k))

    while len(order) < len(tree.nodes):
        start = next((k for k in tree.nodes if ready(k)), None)
        if start is None:
            raise ValueError("skeleton tree has a dependency cycle")
        stack = [start]
        while stack:
            k = stack.pop()
            if not ready(k):
                continue
            done.add(k)
            order.append(k)
            # reversed so that the smallest child is explored first
            stack.extend(sorted((c for c in tree.upper_nodes(k) if ready(c)), reverse=True))
    return PrintSequence(order, "dpt")


def _reverse_pcs(pcs, nodes):
    rev = {k: set() for k in nodes}
    if pcs is None:
        return rev
    for u in pcs:
        for c in pcs[u]:
            if c in rev and c != u:
                rev[c].add(u)
    return rev


def greedy(tree, pcs):
    """Greedy sequence optimisation under both printability criteria.

    At each step the candidates are the unprinted nodes whose lower nodes
    are printed and which appear in no unprinted node's PCS. An upper node
    of the current node is preferred; otherwise the candidate with the
    nearest centroid is taken.

    Raises
    ------
    DeadlockError
        Unprinted nodes remain but none is a candidate.
    """
    nodes = list(tree.nodes)
    blocked_by = _reverse_pcs(pcs, nodes)
    printed = set()
    unprinted = set(nodes)
    order, current = [], None
    while unprinted:
        cands = [c for c in nodes if c in unprinted
                 and all(p in printed for p in tree.lower_nodes(c))
                 and not (blocked_by[c] & unprinted) - {c}]
        if not cands:
            raise DeadlockError("no collision-free sequence under greedy",
                                printed=list(order), unprinted=sorted(unprinted))
        ups = [c for c in cands if current is not None and c in tree.upper_nodes(current)]
        k = min(ups) if ups else _nearest(tree, current, cands)
        order.append(k)
        printed.add(k)
        unprinted.discard(k)
        current = k
    return PrintSequence(order, "greedy")


def _check_permutation(seq, tree):
    order = list(seq)
    if len(order) != len(tree.nodes) or set(order) != set(tree.nodes):
        missing = sorted(set(tree.nodes) - set(order))
        extra = sorted(set(order) - set(tree.nodes))
        dup = len(order) - len(set(order))
        return (f"sequence is not a permutation of the tree nodes "
                f"(missing {len(missing)}, unknown {len(extra)}, duplicates {dup})")
    return None


def validate_sequence(seq, tree, pcs=None):
    """Check both printability criteria step by step.

    Criterion 1: every lower node of the printed node is already printed.
    Criterion 2: no still-unprinted node lists the printed node in its PCS.
    """
    problem = _check_permutation(seq, tree)
    if problem:
        return ValidationReport(False, message=problem)
    blocked_by = _reverse_pcs(pcs, tree.nodes)
    printed = set()
    unprinted = set(tree.nodes)
    for step, k in enumerate(seq, start=1):
        missing = [p for p in tree.lower_nodes(k) if p not in printed]
        if missing:
            return ValidationReport(False, step, 1, k,
                                    f"step {step}: {k} printed before its lower node {missing[0]}")
        unprinted.discard(k)
        clash = sorted(blocked_by[k] & unprinted)
        if clash:
            return ValidationReport(False, step, 2, k,
                                    f"step {step}: {k} is in the PCS of unprinted {clash[0]}")
        printed.add(k)
    return ValidationReport(True, message="valid")


def sequence_metrics(seq, layers, tree, pcs=None, nozzle_angle=None):
    """Retractions, air-move length and collision-freedom of ``seq``.

    A retraction is a consecutive pair not joined by a tree edge; its air
    move is the centroid-to-centroid distance of the two surfaces.
    """
    problem = _check_permutation(seq, tree)
    if problem:
        raise ValueError(problem)
    order = list(seq)
    retractions, air = 0, 0.0
    for a, b in zip(order[:-1], order[1:]):
        if not tree.has_edge(a, b):
            retractions += 1
            air += float(np.linalg.norm(np.asarray(layers.get(a).centroid)
                                        - np.asarray(layers.get(b).centroid)))
    collision_free = _collision_free(order, pcs, tree.nodes)
    if nozzle_angle is None and pcs is not None and getattr(pcs, "cone", None) is not None:
        nozzle_angle = pcs.cone.half_angle
    return SequenceMetrics(retractions, air, bool(collision_free), getattr(seq, "strategy", ""),
                           nozzle_angle, getattr(pcs, "seconds", 0.0) if pcs is not None else 0.0)


def _collision_free(order, pcs, nodes):
    blocked_by = _reverse_pcs(pcs, nodes)
    unprinted = set(nodes)
    for k in order:
        unprinted.discard(k)
        if blocked_by[k] & unprinted:
            return False
    return True


STRATEGIES = ("lpt", "dpt", "greedy")


def run_strategy(name, tree, pcs=None):
    if name == "lpt":
        return lpt(tree)
    if name == "dpt":
        return dpt(tree)
    if name == "greedy":
        return greedy(tree, pcs)
    raise ValueError(f"strategy must be one of {STRATEGIES}, got {name!r}")
