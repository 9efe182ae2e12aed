import warnings

import numpy as np
import pytest

from geoslice import datasets as ds
from geoslice.collision import NozzleCone, compute_pcs_table
from geoslice.exceptions import MeshQualityWarning
from geoslice.geodesic import geodesic_distance_field
from geoslice.layers import decompose
from geoslice.mesh import select_base_vertices
from geoslice.skeleton import build_skeleton_tree

ANGLES = (75.0, 60.0, 45.0, 30.0, 15.0, 1.0)

_ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    """Store one acceptance line; printed in the terminal summary."""
    _ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


class Sliced:
    """Field, layers and tree of one mesh."""

    def __init__(self, mesh, interval=1.0, source=None):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MeshQualityWarning)
            self.mesh = mesh
            self.source = select_base_vertices(mesh) if source is None else np.asarray(source)
            self.phi = geodesic_distance_field(mesh, self.source)
            self.layers = decompose(mesh, self.phi, interval, self.source)
            self.tree = build_skeleton_tree(self.layers)


@pytest.fixture(scope="session")
def box():
    return Sliced(ds.make_box_mesh())


@pytest.fixture(scope="session")
def cylinder():
    return Sliced(ds.make_cylinder_mesh())


@pytest.fixture(scope="session")
def cone():
    return Sliced(ds.make_cone_mesh())


@pytest.fixture(scope="session")
def two_columns():
    return Sliced(ds.make_two_columns_mesh())


@pytest.fixture(scope="session")
def three_branch():
    return Sliced(ds.make_three_branch_mesh())


@pytest.fixture(scope="session")
def disk_stack():
    return Sliced(ds.make_disk_stack_mesh())


@pytest.fixture(scope="session")
def pcs_tables(three_branch):
    """PCS table of the three-branch fixture for every tested angle."""
    return {a: compute_pcs_table(three_branch.layers, NozzleCone(a), tree=three_branch.tree)
            for a in ANGLES}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
