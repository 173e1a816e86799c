"""Flux error, convergence rates and dense estimates of the stability constants."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .assembly import AssembledSystem, quadrature_points
from .fespace import BrokenVectorP1Space, ScalarP1Space, evaluate_broken
from .quadrature import simplex_quadrature

DENSE_CAP = 2000


@dataclass
class ConvergenceRow:
    level: int
    h: float
    error: float
    rate: float
    iterations: int
    final_residual: float

    def as_dict(self) -> dict:
        return asdict(self)


def flux_error(mesh, coefficient, exact_flux, p, space, quad_degree: int = 5,
               boundary_values=None) -> float:
    """Weighted error ``sqrt(int a^-1 |sigma - p_h|^2)``.

    ``space`` decides how ``p`` is read: broken trial coefficients for a
    :class:`BrokenVectorP1Space`, or a test vector ``w`` with ``p_h = a grad w``
    for a :class:`ScalarP1Space`, where ``w`` takes ``boundary_values`` on the
    Dirichlet vertices. ``exact_flux(x, tags)`` returns ``(n, d)``.
    """
    if exact_flux is None:
        raise ValueError("flux error needs an exact flux")
    rule = simplex_quadrature(mesh.dim, quad_degree)
    nq = len(rule.weights)
    pts = quadrature_points(mesh, rule).reshape(-1, mesh.dim)
    tags = np.repeat(mesh.tags, nq)
    a = coefficient(pts, tags).reshape(mesh.n_cells, nq)
    sigma = exact_flux(pts, tags).reshape(mesh.n_cells, nq, mesh.dim)
    if isinstance(space, BrokenVectorP1Space):
        ph = evaluate_broken(space, p, np.arange(mesh.n_cells), rule.points, coefficient)
    elif isinstance(space, ScalarP1Space):
        w = space.extend(p)
        if boundary_values is not None:
            w[space.dirichlet_dofs] = boundary_values
        grad = np.einsum("ck,ckd->cd", w[mesh.cells], mesh.hat_gradients)
        ph = a[..., None] * grad[:, None, :]
    else:
        raise TypeError("space must be a test or broken trial space")
    diff = sigma - ph
    integrand = np.einsum("cqd,cqd->cq", diff, diff) / a
    return float(np.sqrt(np.sum(mesh.volumes * (integrand @ rule.weights))))


def convergence_rates(errors) -> list:
    """``log2(e_{k-1} / e_k)`` with a leading 0 for the first level."""
    errors = [float(e) for e in errors]
    if any(not e > 0 for e in errors):
        raise ValueError("errors must be positive")
    return [0.0] + [float(np.log2(errors[k - 1] / errors[k])) for k in range(1, len(errors))]


def _check_size(sys: AssembledSystem):
    if sys.V.ndofs > DENSE_CAP:
        raise ValueError(f"dense estimate limited to {DENSE_CAP} test dofs, got {sys.V.ndofs}")


def _schur(sys: AssembledSystem) -> np.ndarray:
    """Dense ``G^T M_A^{-1} G``, the Gram matrix of ``R_h(a grad phi_m)`` in ``(.,.)_h``."""
    Y = np.column_stack([sys.M_solver.solve(sys.G[:, m].toarray().ravel())
                         for m in range(sys.V.ndofs)])
    K = sys.G.T @ Y
    return 0.5 * (K + K.T)


def _min_eig(A, B) -> float:
    return float(sla.eigh(A, B, eigvals_only=True, subset_by_index=[0, 0])[0])


def estimate_infsup(sys: AssembledSystem, trial_mode: str = "projection") -> float:
    """Dense discrete inf-sup constant ``m_h``.

    Both trial spaces are images of the test space, so the inf-sup quotient
    reduces to the smallest eigenvalue of a pencil against the stiffness matrix:
    ``G^T M_A^{-1} G`` with projection, the weighted stiffness ``S_A`` without.
    """
    _check_size(sys)
    S = sys.S.toarray()
    if trial_mode == "projection":
        K = _schur(sys)
    elif trial_mode == "no-projection":
        K = sys.S_A.toarray()
    else:
        raise ValueError(f"unknown trial mode {trial_mode!r}")
    return float(np.sqrt(max(_min_eig(K, S), 0.0)))


def estimate_coercivity(sys: AssembledSystem) -> float:
    """``min_v ||R_h a grad v||_h / ||a grad v||`` over the test space."""
    _check_size(sys)
    lam = _min_eig(_schur(sys), sys.S_A.toarray())
    return float(np.sqrt(max(lam, 0.0)))


def local_meshsize_sq(space: BrokenVectorP1Space) -> np.ndarray:
    """Squared local mesh size per trial dof: mean area (or volume^(2/3)) of the patch."""
    mesh = space.mesh
    out = np.empty(space.ndofs)
    for i, tag in enumerate(space.subdomains):
        sel = mesh.tags == tag
        cells = mesh.cells[sel]
        vol = np.bincount(cells.ravel(), weights=np.repeat(mesh.volumes[sel], mesh.dim + 1),
                          minlength=mesh.n_vertices)
        cnt = np.bincount(cells.ravel(), minlength=mesh.n_vertices)
        verts = space.vertex_lists[i]
        h2 = (vol[verts] / cnt[verts]) ** (2.0 / mesh.dim)
        out[space.block(i)] = np.tile(h2, mesh.dim)
    return out


def mass_scaling_bound(sys: AssembledSystem) -> float:
    """Largest eigenvalue of ``a_max^-1 D^{-1/2} M_A D^{-1/2}`` (bounded uniformly in h)."""
    d = sp.diags(1.0 / np.sqrt(local_meshsize_sq(sys.W)))
    lam = eigsh(d @ sys.M_A @ d, k=1, which="LA", return_eigenvectors=False)[0]
    return float(lam / sys.coefficient.a_max)
