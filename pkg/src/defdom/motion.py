"""Mesh motion: harmonic interior displacement (ALE) and boundary Poisson motion (BALE).

The interior displacement ``x - X`` solves a vector Laplace problem on the
reference mesh.  On a moving closed boundary the same field is governed by a
boundary Poisson equation whose source only acts along the normal::

    int_S grad_S q~ : grad_S q + g q~ . n = 0

with the surface operators taken on the displaced curve.  ``g`` is then
fixed by whatever normal motion the boundary must follow, for instance
impermeability ``int_S g~ u . n = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import jax.numpy as jnp
import numpy as np

from .errors import ConfigurationError, GeometryError
from .fem.assembly import DirichletBC, Term, WeakForm, residual
from .fem.solve import NewtonSettings, newton_solve
from .fem.spaces import BlockLayout, BlockVector, make_space
from .surface import contour_points

FIXED_TAGS = ("wall", "inlet", "outlet")


@dataclass
class AleField:
    """Interior displacement ``x - X`` (n_nodes, 2) and the boundary data used."""

    displacement: np.ndarray
    boundary_data: dict = field(default_factory=dict)


@dataclass
class BaleField:
    """Boundary displacement ``q`` (bubble nodes, 2) and normal source ``g``."""

    q: np.ndarray
    g: np.ndarray
    nodes: np.ndarray
    displacement: np.ndarray = None
    history: list = field(default_factory=list)


# --------------------------------------------------------------- kernels
# Kernels are cached per block name so compiled element routines are reused.

@lru_cache(maxsize=None)
def _laplace_kernel(block):
    def kernel(geo, f, k):
        return {block: (None, f[block].grad)}
    return kernel


@lru_cache(maxsize=None)
def _bale_kernel(block, source, velocity):
    def kernel(geo, f, k):
        q = f[block]
        out = {block: (f[source].val[:, None] * geo.n, q.sgrad)}
        if velocity is not None:
            out[source] = jnp.sum(f[velocity].val * geo.n, axis=1)
        return out
    return kernel


@lru_cache(maxsize=None)
def _anchor_kernel(block, ax, ay):
    def kernel(geo, f, k):
        q = f[block].val
        lam = jnp.stack([f[ax].val, f[ay].val], axis=1)
        return {block: lam, ax: q[:, 0], ay: q[:, 1]}
    return kernel


# --------------------------------------------------------------- builders

def boundary_node_dofs(space, mesh, tags=None):
    """Dofs of a domain vector space sitting on boundary nodes (all tags by default)."""
    nodes = mesh.nodes_with_tag(*(tags or set(mesh.boundary_tags)))
    nodes = nodes[space.slot[nodes] >= 0]
    return np.unique(space.node_dofs(nodes))


def ale_term(space, mesh, block="disp") -> Term:
    """Vector Laplace rows of ``block`` at interior nodes, on the reference mesh."""
    return Term(_laplace_kernel(block), [block], [block], reference_geometry=True,
                row_exclude={block: boundary_node_dofs(space, mesh)}, name="ale")


def fixed_boundary_conditions(space, mesh, block="disp", tags=FIXED_TAGS):
    """Homogeneous displacement on non-deforming boundaries."""
    present = [t for t in tags if t in set(mesh.boundary_tags)]
    if not present:
        return []
    return [DirichletBC(block, boundary_node_dofs(space, mesh, present), 0.0)]


def require_closed(mesh, tag):
    if len(mesh.edges_with_tag(tag)) == 0:
        raise ConfigurationError(f"mesh has no {tag!r} edges")
    if contour_points(mesh, (tag,)):
        raise GeometryError(f"unsupported topology: boundary {tag!r} is open; "
                            "boundary motion needs a closed curve")


def bale_term(mesh, block="disp", source="g", velocity=None, tag="bubble") -> Term:
    """Boundary Poisson rows for ``block`` on ``tag`` plus, optionally, the
    normal-motion rows ``int g~ u . n`` coupling ``source`` to ``velocity``.

    The term is integrated on the geometry displaced by ``block``.
    """
    require_closed(mesh, tag)
    tests = [block] + ([source] if velocity is not None else [])
    unknowns = [b for b in (block, source, velocity) if b is not None]
    return Term(_bale_kernel(block, source, velocity), tests, unknowns, where="edges",
                tags=(tag,), geometry=block, name="bale")


def anchor_term(block="disp", multipliers=("qx", "qy"), tag="bubble") -> Term:
    """Zero mean of ``block`` over ``tag`` through two global multipliers."""
    ax, ay = multipliers
    return Term(_anchor_kernel(block, ax, ay), [block, ax, ay], [block, ax, ay], where="edges",
                tags=(tag,), reference_geometry=True, name="anchor")


# ------------------------------------------------------------ residuals

def ale_residual(mesh, displacement, block="disp"):
    """Interior Laplace residual of a nodal displacement (n_nodes, 2).

    Rows at boundary nodes are zero; they belong to boundary equations.
    """
    space = make_space(mesh, "domain_vector", 2)
    lay = BlockLayout({block: space})
    state = BlockVector(lay, np.asarray(displacement, float)[space.nodes()].ravel())
    form = WeakForm(mesh, lay, [ale_term(space, mesh, block)])
    return residual(form, state).reshape(-1, 2)


def bale_residual(mesh, displacement, g, tag="bubble", velocity=None):
    """Rows of the boundary Poisson equation at ``tag`` nodes.

    ``displacement`` is nodal (n_nodes, 2); ``g`` is given at the nodes of a
    quadratic boundary space on ``tag`` (ordered as ``space.nodes()``).
    Returns ``(q_rows, g_rows, nodes)``; ``g_rows`` is None without a velocity.
    """
    space = make_space(mesh, "domain_vector", 2)
    gs = make_space(mesh, "boundary_scalar", 2, tags=(tag,))
    blocks = {"disp": space, "g": gs}
    if velocity is not None:
        blocks["u"] = space
    lay = BlockLayout(blocks)
    state = lay.zeros()
    state["disp"] = np.asarray(displacement, float)[space.nodes()].ravel()
    state["g"] = np.asarray(g, float)
    if velocity is not None:
        state["u"] = np.asarray(velocity, float)[space.nodes()].ravel()
    term = bale_term(mesh, "disp", "g", "u" if velocity is not None else None, tag)
    r = BlockVector(lay, residual(WeakForm(mesh, lay, [term]), state))
    nodes = gs.nodes()
    q_rows = r["disp"].reshape(-1, 2)[space.slot[nodes]]
    return q_rows, (r["g"].copy() if velocity is not None else None), nodes


# ---------------------------------------------------------------- solves

def ale_form(mesh, boundary_data: dict) -> WeakForm:
    """Vector Laplace system with Dirichlet data on every boundary node.

    ``boundary_data`` maps a tag to a callable of reference positions
    ``(n, 2) -> (n, 2)``; tags not listed stay fixed.
    """
    space = make_space(mesh, "domain_vector", 2)
    lay = BlockLayout({"disp": space})
    bcs = []
    for tag in sorted(set(mesh.boundary_tags)):
        nodes = mesh.nodes_with_tag(tag)
        if tag in boundary_data:
            vals = np.asarray(boundary_data[tag](mesh.points[nodes]), float).reshape(-1, 2)
        else:
            vals = np.zeros((len(nodes), 2))
        bcs.append(DirichletBC("disp", space.node_dofs(nodes), vals.ravel()))
    return WeakForm(mesh, lay, [ale_term(space, mesh)], dirichlet=bcs)


def solve_ale(mesh, boundary_data: dict) -> AleField:
    """Harmonic extension of boundary displacement data, see :func:`ale_form`."""
    form = ale_form(mesh, boundary_data)
    x = newton_solve(form, form.layout.zeros(), NewtonSettings(abs_tol=1e-12))
    return AleField(form.layout.spaces["disp"].nodal(x["disp"]), dict(boundary_data))


def bale_form(mesh, g, tag="bubble") -> WeakForm:
    """Standalone boundary-motion form: ALE interior, boundary Poisson on ``tag``
    with a prescribed source and a zero-mean anchor; other boundaries fixed."""
    require_closed(mesh, tag)
    space = make_space(mesh, "domain_vector", 2)
    gs = make_space(mesh, "boundary_scalar", 2, tags=(tag,))
    glob = make_space(mesh, "global_scalar")
    lay = BlockLayout({"disp": space, "qx": glob, "qy": glob})
    params = BlockVector(BlockLayout({"g": gs}))
    gn = gs.nodes()
    params["g"] = (np.asarray(g(mesh.points[gn]), float) if callable(g)
                   else np.full(len(gn), float(g)))

    bale = Term(_bale_kernel("disp", "g", None), ["disp"], ["disp"], params=["g"],
                where="edges", tags=(tag,), geometry="disp", name="bale")
    terms = [ale_term(space, mesh), bale, anchor_term("disp", ("qx", "qy"), tag)]
    return WeakForm(mesh, lay, terms, params=params,
                    dirichlet=fixed_boundary_conditions(space, mesh, tags=[
                        t for t in set(mesh.boundary_tags) if t != tag]))


def solve_bale(mesh, g, tag="bubble", settings=None) -> BaleField:
    """Boundary Poisson motion of a closed boundary under a prescribed source.

    ``g`` is a scalar or a callable of reference positions.  The remaining
    translation is removed by requiring zero mean displacement on ``tag``;
    other boundaries are fixed and the interior follows harmonically.
    """
    form = bale_form(mesh, g, tag)
    x = newton_solve(form, form.layout.zeros(), settings or NewtonSettings(abs_tol=1e-12))
    space = form.layout.spaces["disp"]
    gn = form.params.layout.spaces["g"].nodes()
    disp = space.nodal(x["disp"])
    return BaleField(disp[gn], form.params["g"].copy(), gn, disp, list(x.history))
