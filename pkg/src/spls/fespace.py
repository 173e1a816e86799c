"""Scalar P1 test space and the broken per-subdomain vector P1 trial container."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class ScalarP1Space:
    """Continuous piecewise linears vanishing on the boundary.

    ``dof_map[v]`` is the free dof of vertex ``v`` or ``-1`` on the boundary.
    """

    mesh: Mesh
    free_dofs: np.ndarray
    dirichlet_dofs: np.ndarray
    dof_map: np.ndarray

    @property
    def ndofs(self) -> int:
        return len(self.free_dofs)

    def extend(self, u: np.ndarray) -> np.ndarray:
        """Nodal values on all vertices (zero on the boundary)."""
        full = np.zeros(self.mesh.n_vertices)
        full[self.free_dofs] = u
        return full


def build_test_space(mesh: Mesh) -> ScalarP1Space:
    if mesh.domain is not None:
        on_bd = mesh.domain.on_boundary(mesh.vertices)
    else:
        on_bd = np.zeros(mesh.n_vertices, dtype=bool)
        on_bd[mesh.boundary_vertices] = True
    free = np.flatnonzero(~on_bd)
    dof_map = np.full(mesh.n_vertices, -1, dtype=np.int64)
    dof_map[free] = np.arange(len(free))
    return ScalarP1Space(mesh, free, np.flatnonzero(on_bd), dof_map)


@dataclass(frozen=True, eq=False)
class BrokenVectorP1Space:
    """Vector P1 fields, continuous inside each subdomain, with no boundary conditions.

    Dofs are laid out subdomain by subdomain and, inside a subdomain, component
    by component: ``[sub 1 x | sub 1 y | sub 2 x | sub 2 y | ...]``. A trial
    coefficient vector holds coefficients of the basis ``a * Phi``.
    """

    mesh: Mesh
    subdomains: np.ndarray           # sorted tags
    vertex_lists: tuple              # per subdomain, global vertex ids
    offsets: np.ndarray              # start of each subdomain block, plus total
    cell_dofs: np.ndarray            # (nc, d+1, d) global dof of (cell, local vertex, component)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def ndofs(self) -> int:
        return int(self.offsets[-1])

    def block(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    @cached_property
    def dof_vertex(self) -> np.ndarray:
        out = np.empty(self.ndofs, dtype=np.int64)
        for i, verts in enumerate(self.vertex_lists):
            out[self.block(i)] = np.tile(verts, self.dim)
        return out

    @cached_property
    def dof_component(self) -> np.ndarray:
        out = np.empty(self.ndofs, dtype=np.int64)
        for i, verts in enumerate(self.vertex_lists):
            out[self.block(i)] = np.repeat(np.arange(self.dim), len(verts))
        return out

    @cached_property
    def dof_subdomain(self) -> np.ndarray:
        out = np.empty(self.ndofs, dtype=np.int64)
        for i, tag in enumerate(self.subdomains):
            out[self.block(i)] = tag
        return out

    def interpolate(self, func) -> np.ndarray:
        """Nodal coefficients of the raw field ``func(x, tags) -> (n, d)`` per subdomain."""
        pts = self.mesh.vertices[self.dof_vertex]
        vals = func(pts, self.dof_subdomain)
        return vals[np.arange(self.ndofs), self.dof_component]


def build_broken_space(mesh: Mesh) -> BrokenVectorP1Space:
    d = mesh.dim
    tags = mesh.subdomains
    vertex_lists = []
    offsets = [0]
    cell_dofs = np.empty((mesh.n_cells, d + 1, d), dtype=np.int64)
    local = np.full(mesh.n_vertices, -1, dtype=np.int64)
    for tag in tags:
        sel = mesh.tags == tag
        verts = np.unique(mesh.cells[sel])
        n_i = len(verts)
        local[:] = -1
        local[verts] = np.arange(n_i)
        base = offsets[-1]
        for c in range(d):
            cell_dofs[sel, :, c] = base + c * n_i + local[mesh.cells[sel]]
        vertex_lists.append(verts)
        offsets.append(base + d * n_i)
    return BrokenVectorP1Space(mesh, tags, tuple(vertex_lists), np.array(offsets), cell_dofs)


def evaluate_broken(space: BrokenVectorP1Space, coeffs: np.ndarray, cells, bary,
                    coefficient) -> np.ndarray:
    """Value ``a(x) * q(x)`` of a trial function at barycentric points.

    ``bary`` holds ``(nq, d+1)`` barycentric points shared by all ``cells``; the
    result has shape ``(m, nq, d)``. A scalar cell with a single point returns a
    plain ``d``-vector.
    """
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (space.ndofs,):
        raise ValueError(f"expected {space.ndofs} coefficients, got {coeffs.shape}")
    single = np.ndim(cells) == 0 and np.ndim(bary) == 1
    cells = np.atleast_1d(np.asarray(cells))
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    mesh = space.mesh
    if bary.shape[1] != mesh.dim + 1:
        raise ValueError("barycentric coordinates must have d+1 entries")
    nodal = coeffs[space.cell_dofs[cells]]            # (m, d+1, d)
    x = mesh.vertices[mesh.cells[cells]]              # (m, d+1, d)
    raw = np.einsum("qk,mkc->mqc", bary, nodal)
    pts = np.einsum("qk,mkc->mqc", bary, x)
    a = coefficient(pts.reshape(-1, mesh.dim), np.repeat(mesh.tags[cells], len(bary)))
    out = a.reshape(len(cells), len(bary))[..., None] * raw
    return out[0, 0] if single else out
