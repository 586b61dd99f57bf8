import math
from dataclasses import replace

import numpy as np
import pytest

from defdom import ConfigurationError, DefdomError, bubble, selftest
from defdom.fem.spaces import BlockVector
from defdom.surface import boundary_mass

from conftest import SMALL_BUBBLE


def shifted_solve(z, d):
    cfg = z.config
    r = cfg.radius
    gap = 0.9 * (0.5 - abs(cfg.epsilon) - r - abs(d))
    m = bubble.shift_mesh(z.mesh, d, r, (cfg.L / 2, cfg.epsilon), gap)
    return bubble.solve_zeroth(replace(cfg, epsilon=cfg.epsilon + d), m,
                               initial=BlockVector(z.layout, z.vector.data.copy()))


def globals_fd(z, delta):
    hi, lo = shifted_solve(z, delta), shifted_solve(z, -delta)
    return {k: (getattr(hi, k + "0") - getattr(lo, k + "0")) / (2 * delta) for k in ("V", "dp", "pG", "f")}


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("kw", [dict(Ca=0.0, V_B=0.1), dict(Ca=0.2, V_B=-0.1),
                                dict(Ca=0.2, V_B=SMALL_BUBBLE, epsilon=0.35),
                                dict(Ca=0.2, V_B=SMALL_BUBBLE, mesh_h=0.0),
                                dict(Ca=0.2, V_B=0.45, L=0.7)])
def test_case_validation(kw):
    with pytest.raises(ConfigurationError):
        bubble.CaseConfig(**kw)


def test_pressure_reference_is_on_the_inlet_centreline():
    cfg = bubble.CaseConfig(Ca=0.2, V_B=SMALL_BUBBLE, mesh_h=0.1)
    mesh = bubble.case_mesh(cfg)
    node = bubble.pressure_reference_node(mesh)
    assert node in set(mesh.nodes_with_tag("inlet"))
    assert np.allclose(mesh.points[node], [0.0, 0.0], atol=1e-12)


# ---------------------------------------------------------------- zeroth order

@pytest.mark.parametrize("name", ["centred_state", "offset_state"])
def test_zeroth_state_constraints(name, request):
    z = request.getfixturevalue(name)
    assert np.abs(bubble.zeroth_residual(z)).max() < 1e-9
    assert abs(z.bubble_area() - z.config.V_B) < 1e-10
    fb = bubble.force_balance(z)
    assert abs(fb["reduced_residual"]) < 1e-9
    assert abs(fb["full_residual"]) < 1e-9


def test_centred_bubble_feels_no_lift(centred_state):
    z = centred_state
    assert abs(z.f0) < 1e-6
    assert abs(z.bubble_centroid()[1]) < 1e-10
    assert z.V0 > 0


def test_offset_bubble_is_pushed_back_to_the_centre(offset_state):
    assert offset_state.f0 < 0


def test_stiff_surface_tension_keeps_the_bubble_round():
    cfg = bubble.CaseConfig(Ca=0.01, V_B=SMALL_BUBBLE, mesh_h=0.1)
    z = bubble.solve_zeroth(cfg)
    nodes = z.mesh.nodes_with_tag("bubble")
    X = z.mesh.points[nodes] + z.displacement[nodes]
    r = np.hypot(*(X - z.bubble_centroid()).T)
    assert np.abs(r / cfg.radius - 1).max() < 0.02


def test_huge_capillary_number_either_converges_or_fails_cleanly():
    cfg = bubble.CaseConfig(Ca=1e6, V_B=SMALL_BUBBLE, mesh_h=0.1)
    try:
        z = bubble.solve_zeroth(cfg, max_steps=3)
    except DefdomError:
        return
    assert np.abs(bubble.zeroth_residual(z)).max() < 1e-9


# ---------------------------------------------------------------- first order

def test_first_order_is_symmetric_at_the_centre(centred_state):
    first = bubble.solve_first(centred_state)
    assert abs(first.V1) < 1e-8
    assert abs(first.dp1) < 1e-8


def test_first_order_shape_constraints(offset_first):
    z = offset_first.zeroth
    sp = offset_first.vector.layout.spaces["rho"]
    M = boundary_mass(z.mesh, sp, z.displacement)
    rho = offset_first.rho1
    nodes = sp.nodes()
    y = z.mesh.points[nodes, 1] + z.displacement[nodes, 1]
    assert abs(np.ones_like(rho) @ M @ rho) < 1e-8
    # an upward shift moves the boundary against the liquid normal on top
    assert y @ M @ rho == pytest.approx(-z.config.V_B, rel=1e-8)


def test_first_order_globals_match_finite_differences(offset_state, offset_first):
    fd = globals_fd(offset_state, 1e-3)
    got = {"V": offset_first.V1, "dp": offset_first.dp1, "pG": offset_first.pG1, "f": offset_first.f1}
    for k in fd:
        assert got[k] == pytest.approx(fd[k], rel=0.04), k


def test_difference_quotient_is_stable_under_step_halving(offset_state):
    a = globals_fd(offset_state, 1e-3)["f"]
    b = globals_fd(offset_state, 5e-4)["f"]
    assert a == pytest.approx(b, rel=1e-3)


def test_partial_sweep_reports_the_failed_point():
    cfg = bubble.CaseConfig(Ca=0.2, V_B=SMALL_BUBBLE, mesh_h=0.1)
    rep = bubble.sensitivity_validation(cfg, 1e-3, [0.05, 0.35])
    good, bad = rep.rows
    assert good.ok and not bad.ok
    assert "ConfigurationError" in bad.error
    assert not rep.complete
    assert rep.max_mismatch == good.mismatch
    assert math.isnan(bad.f1)


# ---------------------------------------------------------------- Jacobians

def test_zeroth_jacobian(offset_state, rng):
    z = offset_state
    form = bubble.zeroth_form(z.config, z.mesh, z.layout)
    x = z.vector.copy()
    x.data[:] += 1e-3 * rng.standard_normal(x.data.size)
    assert selftest.jacobian_fd_error(form, x, rng, count=30) < 1e-5


def test_first_jacobian(offset_state, rng):
    form = bubble.first_form(offset_state)
    x = form.layout.zeros()
    x.data[:] = rng.standard_normal(x.data.size)
    assert selftest.jacobian_fd_error(form, x, rng, count=30) < 1e-4


# ---------------------------------------------------------------- export

def test_csv_and_vtk_export(tmp_path, offset_state, offset_first):
    z = offset_state
    row = bubble.SensitivityRow(z.config.epsilon, z.f0, offset_first.f1, float("nan"), z.V0, z.dp0, z.pG0)
    files = bubble.export_results([row], tmp_path, [(z, offset_first)])
    lines = files["csv"].read_text().splitlines()
    assert lines[0] == ",".join(bubble.CSV_HEADER)
    assert float(lines[1].split(",")[1]) == z.f0
    text = files["vtk"][0].read_text()
    for name in ("mesh_displacement_norm", "velocity_first_order", "CELL_TYPES"):
        assert name in text
    assert f"POINTS {z.mesh.n_nodes} double" in text


def test_empty_csv_has_only_the_header(tmp_path):
    path = bubble.write_csv([], tmp_path / "x.csv")
    assert path.read_text() == ",".join(bubble.CSV_HEADER) + "\n"
