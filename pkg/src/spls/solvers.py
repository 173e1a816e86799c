"""Uzawa-type outer iterations for the discrete saddle point least squares system.

None of the variants needs a basis of the trial space: every iterate is the
image of a test function. In projection mode the residual ``q_j`` is stored
through its broken-space coefficients ``M_A^{-1} G u_j``; without projection
it is stored through the test vector ``u_j`` itself (``q_j = a grad u_j``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import AssembledSystem
from .linalg import InnerSettings, InnerSolveError, inner_solve  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

VARIANTS = ("U", "UG", "UCG")
TRIAL_MODES = ("projection", "no-projection")


class SolverBreakdown(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    variant: str = "UCG"
    trial_mode: str = "projection"
    tol: float = 1e-10
    max_iter: int = 20000
    alpha0: Optional[float] = None   # defaults to 1 / a_max for the plain Uzawa step
    inner: InnerSettings = field(default_factory=InnerSettings)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.trial_mode not in TRIAL_MODES:
            raise ValueError(f"trial_mode must be one of {TRIAL_MODES}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.alpha0 is not None and not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")


@dataclass
class SolverReport:
    iterations: int
    residual_history: list
    converged: bool
    final_u_norm: float

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def _dot(x: np.ndarray, y: np.ndarray) -> float:
    # correctly rounded sum of the products
    return math.fsum(np.multiply(x, y))


class _Projection:
    def __init__(self, sys: AssembledSystem):
        self.sys = sys

    def zeros(self):
        return np.zeros(self.sys.W.ndofs)

    def initial(self):
        """``p_0`` and the test vector of ``v -> b(v, p_0)``."""
        if not self.sys.has_boundary_data:
            return self.zeros(), np.zeros(self.sys.V.ndofs)
        p0 = self.sys.M_solver.solve(self.sys.G_D @ self.sys.g)
        return p0, self.b_vector(p0)

    def residual(self, u):
        return self.sys.M_solver.solve(self.sys.G @ u)

    def inner(self, p, q):
        return _dot(p, self.sys.M_A @ q)

    def b_vector(self, q):
        """Test-space vector of ``v -> b(v, q)``."""
        return self.sys.G.T @ q


class _NoProjection:
    def __init__(self, sys: AssembledSystem):
        self.sys = sys

    def zeros(self):
        return np.zeros(self.sys.V.ndofs)

    def initial(self):
        # the lift a grad g_h stays implicit: p holds only the free part
        if not self.sys.has_boundary_data:
            return self.zeros(), np.zeros(self.sys.V.ndofs)
        return self.zeros(), self.sys.S_A_D @ self.sys.g

    def residual(self, u):
        return u.copy()

    def inner(self, p, q):
        return _dot(p, self.sys.S_A @ q)

    def b_vector(self, q):
        return self.sys.S_A @ q


def spls_solve(sys: AssembledSystem, cfg: SolverConfig = SolverConfig()):
    """Run U, UG or UCG from ``p_0 = 0``.

    With nonzero Dirichlet data ``p_0`` is the lift ``R_h(a grad g_h)`` of the
    boundary interpolant instead, so the iterates stay in ``p_0 + M_h``.

    Returns ``(u, p, report)`` where ``u`` is the last test iterate ``u_{j+1}``
    and ``p`` the flux iterate ``p_j``: broken-space coefficients in projection
    mode, or a test vector ``w`` with ``p = a grad (w + g_h)`` otherwise.
    """
    space = _Projection(sys) if cfg.trial_mode == "projection" else _NoProjection(sys)
    S = sys.S_solver
    a_max = sys.coefficient.a_max
    alpha0 = cfg.alpha0 if cfg.alpha0 is not None else 1.0 / a_max

    p, b0 = space.initial()
    u = S.solve(sys.F - b0)
    q = space.residual(u)
    qq = space.inner(q, q)
    history = [math.sqrt(max(qq, 0.0))]
    d = q
    converged = history[-1] <= cfg.tol
    j = 0
    while not converged and j < cfg.max_iter:
        j += 1
        direction = d if cfg.variant == "UCG" else q
        h = S.solve(-space.b_vector(direction))
        if cfg.variant == "U":
            alpha = alpha0
        else:
            denom = _dot(space.b_vector(q), h)
            if denom == 0.0:
                if history[-1] <= cfg.tol:
                    converged = True
                    break
                raise SolverBreakdown(f"zero step denominator at iteration {j} "
                                      f"with residual {history[-1]:.3e}")
            alpha = -qq / denom
        p = p + alpha * direction
        u = u + alpha * h
        q_new = space.residual(u)
        qq_new = space.inner(q_new, q_new)
        history.append(math.sqrt(max(qq_new, 0.0)))
        if cfg.variant == "UCG":
            d = q_new + (qq_new / qq) * d
        q, qq = q_new, qq_new
        converged = history[-1] <= cfg.tol
        if len(history) > 3 and history[-1] > history[-2] and cfg.variant != "U":
            log.debug("residual increased at iteration %d: %.3e -> %.3e", j, history[-2], history[-1])

    report = SolverReport(iterations=j, residual_history=history, converged=converged,
                          final_u_norm=math.sqrt(max(_dot(u, sys.S @ u), 0.0)))
    return u, p, report
