"""Sparse assembly of the stiffness, coupling and block mass matrices.

Conventions, for free test dofs ``m, n`` and trial dofs ``k, l`` (basis ``a Phi``):

* ``S[m, n]   = int grad phi_m . grad phi_n``
* ``S_A[m, n] = int a grad phi_m . grad phi_n``
* ``G[k, m]   = int a Phi_k . grad phi_m``       (rows are trial dofs)
* ``M_A[k, l] = int a Phi_k . Phi_l``            (block diagonal by subdomain)
* ``F[m]      = int f phi_m``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .fespace import BrokenVectorP1Space, ScalarP1Space, build_broken_space, build_test_space
from .linalg import InnerSettings, InnerSolver
from .quadrature import simplex_quadrature


def _csr(rows, cols, vals, shape) -> sp.csr_matrix:
    A = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def quadrature_points(mesh, rule) -> np.ndarray:
    """Physical quadrature points, shape ``(nc, nq, d)``."""
    return np.einsum("qk,ckd->cqd", rule.points, mesh.vertices[mesh.cells])


def _coef_at_quad(mesh, coefficient, rule) -> np.ndarray:
    """Coefficient values at quadrature points, shape ``(nc, nq)``."""
    if coefficient.piecewise_constant:
        a = coefficient.per_subdomain(mesh.subdomains)
        lookup = dict(zip(mesh.subdomains.tolist(), a))
        per_cell = np.array([lookup[t] for t in mesh.tags.tolist()])
        return np.repeat(per_cell[:, None], len(rule.weights), axis=1)
    pts = quadrature_points(mesh, rule)
    nq = len(rule.weights)
    return coefficient(pts.reshape(-1, mesh.dim), np.repeat(mesh.tags, nq)).reshape(-1, nq)


def _full_stiffness(mesh, weight: np.ndarray) -> sp.csr_matrix:
    g = mesh.hat_gradients
    local = np.einsum("c,cid,cjd->cij", weight * mesh.volumes, g, g)
    nloc = mesh.dim + 1
    rows = np.repeat(mesh.cells, nloc, axis=1)
    cols = np.tile(mesh.cells, (1, nloc))
    return _csr(rows, cols, local, (mesh.n_vertices, mesh.n_vertices))


def _weighted_stiffness(V: ScalarP1Space, weight: np.ndarray, columns=None) -> sp.csr_matrix:
    K = _full_stiffness(V.mesh, weight)
    cols = V.free_dofs if columns is None else columns
    return K[V.free_dofs][:, cols].tocsr()


def assemble_stiffness(V: ScalarP1Space) -> sp.csr_matrix:
    """Exact P1 stiffness matrix on the free dofs."""
    return _weighted_stiffness(V, np.ones(V.mesh.n_cells))


def assemble_weighted_stiffness(V: ScalarP1Space, coefficient, quad_degree: int = 2,
                                columns=None) -> sp.csr_matrix:
    """``int a grad phi_m . grad phi_n``; rows are free dofs, columns free dofs unless
    ``columns`` lists vertex ids (used for the Dirichlet block)."""
    rule = simplex_quadrature(V.mesh.dim, quad_degree)
    a = _coef_at_quad(V.mesh, coefficient, rule)
    return _weighted_stiffness(V, a @ rule.weights, columns)


def assemble_load(V: ScalarP1Space, f, quad_degree: int = 5) -> np.ndarray:
    mesh = V.mesh
    rule = simplex_quadrature(mesh.dim, quad_degree)
    nq = len(rule.weights)
    pts = quadrature_points(mesh, rule).reshape(-1, mesh.dim)
    fq = np.asarray(f(pts, np.repeat(mesh.tags, nq)), dtype=float).reshape(-1, nq)
    local = mesh.volumes[:, None] * np.einsum("cq,q,qk->ck", fq, rule.weights, rule.points)
    full = np.bincount(mesh.cells.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return full[V.free_dofs]


def _weighted_hat_products(mesh, coefficient, quad_degree):
    """``int_T a lambda_i`` and ``int_T a lambda_i lambda_j`` per cell."""
    rule = simplex_quadrature(mesh.dim, quad_degree)
    a = _coef_at_quad(mesh, coefficient, rule) * rule.weights * mesh.volumes[:, None]
    lam = rule.points
    first = a @ lam
    second = np.einsum("cq,qi,qj->cij", a, lam, lam)
    return first, second


def assemble_coupling(V: ScalarP1Space, W: BrokenVectorP1Space, coefficient,
                      quad_degree: int = 2, columns=None) -> sp.csr_matrix:
    """Trial-by-test matrix with ``b(v, q) = gamma_q^T G v``.

    Columns are the free test dofs, or the vertex ids in ``columns``.
    """
    mesh = V.mesh
    first, _ = _weighted_hat_products(mesh, coefficient, quad_degree)
    g = mesh.hat_gradients                     # (nc, d+1 test, d)
    # local[c, j, comp, m] = int a lambda_j * d_comp phi_m
    local = np.einsum("cj,cmd->cjdm", first, g)
    rows = np.broadcast_to(W.cell_dofs[..., None], local.shape)
    cols = np.broadcast_to(mesh.cells[:, None, None, :], local.shape)
    full = _csr(rows, cols, local, (W.ndofs, mesh.n_vertices))
    return full[:, V.free_dofs if columns is None else columns].tocsr()


def assemble_block_mass(W: BrokenVectorP1Space, coefficient, quad_degree: int = 2) -> sp.csr_matrix:
    """Gram matrix of the trial basis ``a Phi`` in the ``(p, a^-1 q)`` inner product."""
    mesh = W.mesh
    _, second = _weighted_hat_products(mesh, coefficient, quad_degree)
    d = mesh.dim
    rows, cols, vals = [], [], []
    for c in range(d):
        dofs = W.cell_dofs[:, :, c]
        rows.append(np.repeat(dofs, d + 1, axis=1))
        cols.append(np.tile(dofs, (1, d + 1)))
        vals.append(second.reshape(mesh.n_cells, -1))
    return _csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                (W.ndofs, W.ndofs))


def write_coo(A, path) -> None:
    """Debug dump as ``row col value`` lines."""
    C = sp.coo_matrix(A)
    np.savetxt(Path(path), np.column_stack([C.row, C.col, C.data]), fmt=["%d", "%d", "%.17g"])


@dataclass(eq=False)
class AssembledSystem:
    V: ScalarP1Space
    W: BrokenVectorP1Space
    coefficient: object
    S: sp.csr_matrix
    G: sp.csr_matrix
    M_A: sp.csr_matrix
    F: np.ndarray
    S_A: sp.csr_matrix
    inner: InnerSettings = field(default_factory=InnerSettings)
    # nonzero Dirichlet data: nodal values on V.dirichlet_dofs and the matching
    # coupling / weighted stiffness columns
    g: Optional[np.ndarray] = None
    G_D: Optional[sp.csr_matrix] = None
    S_A_D: Optional[sp.csr_matrix] = None

    @property
    def has_boundary_data(self) -> bool:
        return self.g is not None and bool(np.any(self.g))

    @property
    def mesh(self):
        return self.V.mesh

    @cached_property
    def S_solver(self) -> InnerSolver:
        return InnerSolver(self.S, self.inner)

    @cached_property
    def M_solver(self) -> InnerSolver:
        return InnerSolver(self.M_A, self.inner)


def assemble_system(mesh, problem, quad_degree: Optional[int] = None,
                    load_degree: int = 5, inner: InnerSettings = InnerSettings()) -> AssembledSystem:
    """Build both spaces and every matrix needed by the solvers.

    Problems flagged with ``boundary_data`` also get the Dirichlet columns,
    which the solvers use to lift the boundary values.

    ``quad_degree`` governs the coefficient-weighted forms; it defaults to 2
    for piecewise constant coefficients and 5 otherwise.
    """
    coef = problem.coefficient
    if quad_degree is None:
        quad_degree = 2 if coef.piecewise_constant else 5
    V = build_test_space(mesh)
    W = build_broken_space(mesh)
    extra = {}
    if problem.boundary_data:
        D = V.dirichlet_dofs
        extra = dict(g=problem.dirichlet_values(mesh, D),
                     G_D=assemble_coupling(V, W, coef, quad_degree, columns=D),
                     S_A_D=assemble_weighted_stiffness(V, coef, quad_degree, columns=D))
    return AssembledSystem(
        V=V, W=W, coefficient=coef,
        S=assemble_stiffness(V),
        G=assemble_coupling(V, W, coef, quad_degree),
        M_A=assemble_block_mass(W, coef, quad_degree),
        F=assemble_load(V, problem.f, load_degree),
        S_A=assemble_weighted_stiffness(V, coef, quad_degree),
        inner=inner,
        **extra,
    )
