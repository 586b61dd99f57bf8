import math

import jax.numpy as jnp
import numpy as np
import pytest

from defdom import (AssemblyError, ConfigurationError, ConstraintError, ConvergenceError,
                    DescriptorError, SolverError, build_channel_mesh, build_square_mesh)
from defdom import bubble
from defdom.fem import (BlockLayout, BlockSystem, BlockVector, DirichletBC, NewtonSettings,
                        PointConstraint, Term, WeakForm, apply_point_constraint, assemble,
                        make_space, newton_solve, residual, solve_linear)
from defdom.fem import reference as ref
from defdom.selftest import jacobian_fd_error, observed_orders, stokes_mms_form
from defdom.surface import _cell_quadrature, boundary_mass, boundary_space, weak_exterior_differential


def mass(geo, f, k):
    return {"phi": f["phi"].val}


def laplace(geo, f, k):
    return {"phi": (None, f["phi"].grad)}


def poisson_source(geo, f, k):
    x = geo.x
    src = 2 * jnp.pi ** 2 * jnp.sin(jnp.pi * x[:, 0]) * jnp.sin(jnp.pi * x[:, 1])
    return {"phi": (-src, f["phi"].grad)}


def neumann_source(geo, f, k):
    return {"phi": (-(geo.x[:, 0] - 0.5), f["phi"].grad)}


def cubic(geo, f, k):
    p = f["phi"]
    return {"phi": (p.val ** 3 + p.val - 1.0, p.grad)}


def scalar_form(mesh, kernel, degree=1, bc=None, pcs=(), extra=None):
    V = make_space(mesh, "domain_scalar", degree)
    blocks = {"phi": V}
    blocks.update(extra or {})
    lay = BlockLayout(blocks)
    dbc = []
    if bc is not None:
        nodes = mesh.nodes_with_tag("wall")
        nodes = nodes[V.slot[nodes] >= 0]
        dbc = [DirichletBC("phi", V.node_dofs(nodes), bc(mesh.points[nodes]))]
    return WeakForm(mesh, lay, [Term(kernel, ["phi"], ["phi"])], dirichlet=dbc, point_constraints=pcs)


def test_partition_of_unity(rng):
    xi = rng.uniform(0, 0.5, (20, 2))
    for degree in (1, 2):
        N, dN = ref.tri_basis(degree, xi)
        assert np.abs(N.sum(axis=1) - 1).max() < 1e-14
        assert np.abs(dN.sum(axis=1)).max() < 1e-13
        L, _ = ref.line_basis(degree, xi[:, 0])
        assert np.abs(L.sum(axis=1) - 1).max() < 1e-14


def test_mass_matrix_sums_to_area():
    mesh = build_square_mesh(5)
    form = scalar_form(mesh, mass)
    M = assemble(form, form.layout.zeros()).matrix
    assert abs(M.sum() - 1.0) < 1e-12


def test_space_kinds_and_sizes():
    mesh = build_channel_mesh(3.0, 0.2, 0.0, 0.2)
    assert make_space(mesh, "global_scalar").dof_count == 1
    per = make_space(mesh, "domain_vector", 2, periodic=True)
    full = make_space(mesh, "domain_vector", 2)
    outlet = len(set(mesh.nodes_with_tag("outlet")))
    assert full.dof_count - per.dof_count == 2 * outlet
    with pytest.raises(ConfigurationError):
        make_space(mesh, "domain_scalar", 3)
    with pytest.raises(ConfigurationError):
        make_space(mesh, "boundary_scalar", 1)


def test_zero_state_residual_is_tension_and_pressure_drop_only():
    cfg = bubble.CaseConfig(Ca=0.5, V_B=math.pi * 0.04, mesh_h=0.15)
    mesh = bubble.case_mesh(cfg)
    form = bubble.zeroth_form(cfg, mesh)
    lay = form.layout
    R = residual(form, lay.zeros())
    ru = R[lay.slice("u")].reshape(-1, 2)
    u = lay.spaces["u"]

    bsp = boundary_space(mesh, ("bubble",))
    # same 4-point edge rule as the assembler; the integrand is rational on curved edges
    b = weak_exterior_differential(bsp, lambda x: 1.0 + 0 * x[0], mesh, nq=4)
    expect = np.zeros_like(ru)
    np.add.at(expect, u.slot[bsp.nodes()], b / cfg.Ca)
    isp = boundary_space(mesh, ("inlet",))
    inlet_int = np.asarray(boundary_mass(mesh, isp).sum(axis=1)).ravel()
    np.add.at(expect[:, 0], u.slot[isp.nodes()], 12.0 * cfg.L * inlet_int)
    assert np.abs(ru - expect).max() < 1e-12
    assert abs(R[lay.slice("dp")][0] + 1.0) < 1e-12
    assert np.abs(R[lay.slice("p")]).max() < 1e-14
    assert np.abs(R[lay.slice("tau")]).max() < 1e-14


def test_point_constraint_pins_value():
    mesh = build_square_mesh(6)
    glob = make_space(mesh, "global_scalar")
    form = scalar_form(mesh, neumann_source, pcs=[PointConstraint("phi", 0, "lam", 0.25)],
                       extra={"lam": glob})
    x = newton_solve(form, form.layout.zeros())
    assert x["phi"][form.layout.spaces["phi"].slot[0]] == pytest.approx(0.25, abs=1e-13)


def test_apply_point_constraint_on_linear_system():
    mesh = build_square_mesh(6)
    form = scalar_form(mesh, neumann_source, extra={"lam": make_space(mesh, "global_scalar")})
    system = assemble(form, form.layout.zeros())
    pinned = apply_point_constraint(system, "phi", (1.0, 1.0), 0.0, "lam", mesh)
    x = solve_linear(pinned)
    node = int(np.argmin(np.hypot(*(mesh.points - 1.0).T)))
    assert x["phi"][node] == 0.0 or abs(x["phi"][form.layout.spaces["phi"].slot[node]]) < 1e-14
    with pytest.raises(ConstraintError):
        apply_point_constraint(pinned, "phi", (1.0, 1.0), 0.0, "lam", mesh)
    with pytest.raises(ConstraintError):
        apply_point_constraint(system, "phi", (0.5, 0.55), 0.0, "lam", mesh)


def test_point_constraint_resolves_against_reference_positions():
    mesh = build_square_mesh(4)
    V = make_space(mesh, "domain_scalar", 1)
    disp = np.zeros_like(mesh.points)
    inner = [v for v in range(mesh.n_vertices) if 0 < mesh.points[v, 0] < 1 and 0 < mesh.points[v, 1] < 1]
    disp[inner] = 0.03
    lay = BlockLayout({"phi": V, "lam": make_space(mesh, "global_scalar")})
    form = WeakForm(mesh, lay, [Term(neumann_source, ["phi"], ["phi"])])
    system = assemble(form, lay.zeros(), displacement=disp)
    target = mesh.points[inner[0]]
    x = solve_linear(apply_point_constraint(system, "phi", target, 1.5, "lam", mesh))
    assert abs(x["phi"][V.slot[inner[0]]] - 1.5) < 1e-13


def test_duplicate_point_constraint_is_rejected():
    mesh = build_square_mesh(2)
    pcs = [PointConstraint("phi", 0, "lam"), PointConstraint("phi", 0, "lam")]
    with pytest.raises(ConstraintError):
        scalar_form(mesh, mass, pcs=pcs, extra={"lam": make_space(mesh, "global_scalar")})


def test_identity_system_returns_rhs(rng):
    import scipy.sparse as sp

    lay = BlockLayout({"a": make_space(build_square_mesh(1), "global_scalar"),
                       "b": make_space(build_square_mesh(1), "global_scalar")})
    r = rng.standard_normal(2)
    x = solve_linear(BlockSystem(sp.identity(2, format="csr"), BlockVector(lay, r), np.zeros(2, bool), lay))
    assert np.array_equal(x.data, r)


def test_pressure_nullspace_is_reported():
    form = scalar_form(build_square_mesh(4), neumann_source)
    with pytest.raises(SolverError) as info:
        solve_linear(assemble(form, form.layout.zeros()))
    v = info.value.null_vector
    assert v is not None and np.std(v) < 1e-3 * np.abs(v).mean()


@pytest.mark.parametrize("degree", [1, 2])
def test_manufactured_poisson_order(degree):
    errs = []
    for n in (4, 8, 16):
        mesh = build_square_mesh(n)
        form = scalar_form(mesh, poisson_source, degree, bc=lambda P: 0 * P[:, 0])
        x = newton_solve(form, form.layout.zeros())
        V = form.layout.spaces["phi"]
        vals = V.nodal(x["phi"])[:, 0]
        pts, _ = ref.TRI_RULE(8)
        N, _ = ref.tri_basis(degree, pts)
        conn = mesh.cells if degree == 1 else mesh.cell_nodes
        xq, wq = _cell_quadrature(mesh)
        exact = np.sin(np.pi * xq[..., 0]) * np.sin(np.pi * xq[..., 1])
        uh = np.einsum("qa,ca->cq", N, vals[conn])
        errs.append(np.sqrt(np.sum(wq * (uh - exact) ** 2)))
    assert observed_orders([1 / 4, 1 / 8, 1 / 16], errs)[-1] > degree + 0.8


def test_linear_fields_are_reproduced():
    mesh = build_square_mesh(5)
    form = scalar_form(mesh, laplace, 2, bc=lambda P: 2 * P[:, 0] - 3 * P[:, 1] + 0.5)
    x = newton_solve(form, form.layout.zeros())
    V = form.layout.spaces["phi"]
    P = mesh.points[V.nodes()]
    assert np.abs(x["phi"] - (2 * P[:, 0] - 3 * P[:, 1] + 0.5)).max() < 1e-12


def test_linear_problem_takes_one_newton_step():
    form = scalar_form(build_square_mesh(4), poisson_source, 2, bc=lambda P: 0 * P[:, 0])
    x = newton_solve(form, form.layout.zeros(), NewtonSettings(abs_tol=1e-11))
    assert len(x.history) == 2


def test_nonlinear_problem_converges_quadratically():
    form = scalar_form(build_square_mesh(3), cubic, 1)
    x = newton_solve(form, form.layout.zeros(), NewtonSettings(abs_tol=1e-13))
    h = x.history
    assert h[-1] <= 1e-13 and len(h) <= 8


def test_newton_reports_nonconvergence():
    form = scalar_form(build_square_mesh(3), cubic, 1)
    with pytest.raises(ConvergenceError) as info:
        newton_solve(form, form.layout.zeros(), NewtonSettings(abs_tol=1e-14, rel_tol=1e-15, max_iter=1))
    assert info.value.residual is not None and info.value.history


@pytest.mark.parametrize("kw", [dict(abs_tol=0), dict(rel_tol=-1), dict(max_iter=0), dict(damping=1.5)])
def test_newton_settings_validation(kw):
    with pytest.raises(ConfigurationError):
        NewtonSettings(**kw)


def test_undeclared_block_is_a_descriptor_error():
    mesh = build_square_mesh(2)
    lay = BlockLayout({"phi": make_space(mesh, "domain_scalar", 1)})
    with pytest.raises(DescriptorError):
        WeakForm(mesh, lay, [Term(mass, ["psi"], ["phi"])])


def test_inverted_element_names_the_cell():
    mesh = build_square_mesh(2)
    form = scalar_form(mesh, laplace)
    disp = np.zeros_like(mesh.points)
    c = 3
    a, b = mesh.cells[c, 0], mesh.cells[c, 1]
    disp[a] = 2.0 * (mesh.points[b] - mesh.points[a])
    with pytest.raises(AssemblyError) as info:
        assemble(form, form.layout.zeros(), displacement=disp)
    assert info.value.cell is not None


def test_stokes_jacobian_matches_differences(rng):
    form = stokes_mms_form(4)
    x = form.layout.zeros()
    x.data[:] = rng.standard_normal(x.data.size)
    assert jacobian_fd_error(form, x, rng, count=30) < 1e-5
