import math

import numpy as np
import pytest

from defdom import bubble
from defdom.mesh import Mesh2D, build_square_mesh

SMALL_BUBBLE = math.pi * 0.2 ** 2


@pytest.fixture(scope="session")
def centred_state():
    cfg = bubble.CaseConfig(Ca=0.2, V_B=SMALL_BUBBLE, L=3.0, epsilon=0.0, mesh_h=0.1)
    return bubble.solve_zeroth(cfg)


@pytest.fixture(scope="session")
def offset_state():
    cfg = bubble.CaseConfig(Ca=0.2, V_B=SMALL_BUBBLE, L=3.0, epsilon=0.05, mesh_h=0.1)
    return bubble.solve_zeroth(cfg)


@pytest.fixture(scope="session")
def offset_first(offset_state):
    return bubble.solve_first(offset_state)


def retag(mesh, select, tag):
    """Copy of ``mesh`` with the boundary edges picked by ``select(midpoint)`` retagged."""
    be = mesh.boundary_edges
    mids = 0.5 * (mesh.points[be[:, 0]] + mesh.points[be[:, 1]])
    tags = [tag if select(m) else t for m, t in zip(mids, mesh.boundary_tags)]
    return Mesh2D(mesh.points, mesh.cells, be, tags, mesh.cell_midnodes).validate()


@pytest.fixture
def square_with_open_top():
    return retag(build_square_mesh(4), lambda m: m[1] > 1 - 1e-12, "bubble")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion; returns the flag."""
    def record(number, title, passed, detail, seconds):
        line = f"{'PASS' if passed else 'FAIL'} {number} {title}: {detail} [{seconds:.1f} s]"
        _ACCEPTANCE.append(line)
        print(line, flush=True)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
