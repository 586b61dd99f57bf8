"""Function spaces on a :class:`~defdom.mesh.Mesh2D` and named block vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DescriptorError

KINDS = ("domain_scalar", "domain_vector", "boundary_scalar", "boundary_vector", "global_scalar")


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    """Lagrange space. ``slot[node]`` is the compact node index or -1.

    Degree-of-freedom ``slot * ncomp + comp`` stores component ``comp``.
    Periodic spaces share slots between paired inlet and outlet nodes.
    """

    kind: str
    degree: int
    support: tuple
    periodic: bool
    slot: np.ndarray
    n_slots: int
    owners: np.ndarray = None

    @property
    def ncomp(self) -> int:
        return 2 if self.kind.endswith("vector") else 1

    @property
    def dof_count(self) -> int:
        return 1 if self.kind == "global_scalar" else self.n_slots * self.ncomp

    @property
    def is_global(self) -> bool:
        return self.kind == "global_scalar"

    @property
    def on_boundary(self) -> bool:
        return self.kind.startswith("boundary")

    def nodes(self) -> np.ndarray:
        """Node ids owning a slot (masters only for periodic spaces)."""
        return self.owners

    def node_dofs(self, nodes, comp=None) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        s = self.slot[nodes]
        if np.any(s < 0):
            raise DescriptorError("node outside the support of the space")
        if comp is None:
            return (s[:, None] * self.ncomp + np.arange(self.ncomp)[None, :]).ravel()
        return s * self.ncomp + comp

    def interpolate(self, mesh, func) -> np.ndarray:
        """Nodal interpolant; ``func`` maps (n, 2) points to (n,) or (n, ncomp)."""
        if self.is_global:
            return np.atleast_1d(np.asarray(func, dtype=float))
        vals = np.asarray(func(mesh.points[self.nodes()]), dtype=float)
        return vals.reshape(self.n_slots, self.ncomp).ravel()

    def nodal(self, coeffs, n_nodes=None) -> np.ndarray:
        """Expand coefficients to every supported node: (n_nodes, ncomp), NaN off support."""
        coeffs = np.asarray(coeffs).reshape(self.n_slots, self.ncomp)
        n = len(self.slot) if n_nodes is None else n_nodes
        out = np.full((n, self.ncomp), np.nan)
        ok = self.slot >= 0
        out[ok] = coeffs[self.slot[ok]]
        return out


def make_space(mesh, kind, degree=1, tags=None, periodic=False) -> FunctionSpace:
    if kind not in KINDS:
        raise ConfigurationError(f"unknown space kind {kind!r}")
    if kind == "global_scalar":
        return FunctionSpace(kind, 0, (), False, np.zeros(0, dtype=np.int64), 1,
                             np.zeros(0, dtype=np.int64))
    if degree not in (1, 2):
        raise ConfigurationError("degree must be 1 or 2")
    if degree == 2 and not mesh.is_quadratic:
        raise ConfigurationError("quadratic spaces need a mesh with mid-edge nodes")
    n = mesh.n_nodes
    if kind.startswith("domain"):
        if tags:
            raise ConfigurationError("domain spaces live on the whole mesh")
        support = ()
        member = np.zeros(n, dtype=bool)
        member[: mesh.n_vertices] = True
        if degree == 2:
            member[:] = True
    else:
        if not tags:
            raise ConfigurationError("boundary spaces need at least one tag")
        support = tuple(tags)
        edges = mesh.edges_with_tag(*support)
        if len(edges) == 0:
            raise ConfigurationError(f"no boundary edges carry tags {support}")
        en = mesh.boundary_edge_nodes[edges]
        member = np.zeros(n, dtype=bool)
        member[en[:, :2].ravel()] = True
        if degree == 2:
            member[en[:, 2]] = True
    master = mesh.periodic_node_map if periodic else np.arange(n)
    slot = np.full(n, -1, dtype=np.int64)
    owns = member & ~((master != np.arange(n)) & member[master])
    owners = np.flatnonzero(owns)
    slot[owners] = np.arange(len(owners))
    count = len(owners)
    if periodic:
        paired = (master != np.arange(n)) & member
        slot[paired] = slot[master[paired]]
    slot.setflags(write=False)
    owners.setflags(write=False)
    return FunctionSpace(kind, degree, support, bool(periodic), slot, count, owners)


class BlockLayout:
    """Ordered named blocks of a global coefficient vector."""

    def __init__(self, spaces: dict):
        if len(set(spaces)) != len(spaces):
            raise DescriptorError("block names must be unique")
        self.spaces = dict(spaces)
        self.names = tuple(self.spaces)
        self.offsets = {}
        off = 0
        for name in self.names:
            self.offsets[name] = off
            off += self.spaces[name].dof_count
        self.size = off

    def __contains__(self, name):
        return name in self.spaces

    def slice(self, name) -> slice:
        if name not in self.spaces:
            raise DescriptorError(f"unknown block {name!r}")
        o = self.offsets[name]
        return slice(o, o + self.spaces[name].dof_count)

    def block_of(self, index: int) -> str:
        for name in reversed(self.names):
            if index >= self.offsets[name]:
                return name
        raise IndexError(index)

    def zeros(self) -> "BlockVector":
        return BlockVector(self, np.zeros(self.size))


class BlockVector:
    def __init__(self, layout: BlockLayout, data=None):
        self.layout = layout
        self.data = np.zeros(layout.size) if data is None else np.asarray(data, dtype=float)
        if self.data.shape != (layout.size,):
            raise DescriptorError(f"vector length {self.data.shape} does not match layout {layout.size}")

    @property
    def blocks(self) -> dict:
        return {n: self[n] for n in self.layout.names}

    def __getitem__(self, name) -> np.ndarray:
        return self.data[self.layout.slice(name)]

    def __setitem__(self, name, value):
        self.data[self.layout.slice(name)] = value

    def scalar(self, name) -> float:
        return float(self[name][0])

    def copy(self) -> "BlockVector":
        return BlockVector(self.layout, self.data.copy())

    def norms(self) -> dict:
        return {n: float(np.linalg.norm(self[n])) for n in self.layout.names}
