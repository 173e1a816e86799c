"""Sparse SPD solves used inside the outer iterations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee


class InnerSolveError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class InnerSettings:
    method: str = "direct"   # "direct" or "cg"
    tol: float = 1e-12
    maxiter: int = 10000
    refine_steps: int = 2


class InnerSolver:
    """Reusable solver for a fixed SPD matrix.

    ``direct`` factorises once with SuperLU and applies iterative refinement
    when the relative residual exceeds the tolerance. The matrix is first put
    in reverse Cuthill-McKee order: minimum degree alone fills badly on the
    vertex numbering produced by repeated refinement. ``cg`` runs unpreconditioned
    conjugate gradients from a zero start.
    """

    def __init__(self, A, settings: InnerSettings = InnerSettings()):
        self.A = sp.csc_matrix(A)
        self.settings = settings
        self._lu = None
        if settings.method == "direct" and self.A.shape[0] > 0:
            self._perm = reverse_cuthill_mckee(sp.csr_matrix(self.A), symmetric_mode=True)
            self._lu = spla.splu(sp.csc_matrix(self.A[self._perm][:, self._perm]),
                                 permc_spec="MMD_AT_PLUS_A")
        elif settings.method not in ("direct", "cg"):
            raise ValueError(f"unknown inner method {settings.method!r}")

    def _lu_solve(self, b):
        x = np.empty_like(b)
        x[self._perm] = self._lu.solve(b[self._perm])
        return x

    def _relres(self, x, b, bnorm):
        return float(np.linalg.norm(b - self.A @ x) / bnorm)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b)
        tol = self.settings.tol
        if self._lu is not None:
            x = self._lu_solve(b)
            res = self._relres(x, b, bnorm)
            for _ in range(self.settings.refine_steps):
                if res <= tol:
                    break
                x = x + self._lu_solve(b - self.A @ x)
                res = self._relres(x, b, bnorm)
        else:
            x, _ = spla.cg(self.A, b, rtol=tol, atol=0.0, maxiter=self.settings.maxiter)
            res = self._relres(x, b, bnorm)
        if not res <= tol:
            raise InnerSolveError("inner solve did not converge", res)
        return x


def inner_solve(S, rhs, settings: InnerSettings = InnerSettings()) -> np.ndarray:
    return InnerSolver(S, settings).solve(rhs)
