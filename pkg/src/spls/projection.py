"""The representation operator R_h and the discrete trial inner product.

``R_h`` maps ``a grad u_h`` to its subdomain-wise weighted L2 projection onto
the broken trial space; in coefficients this is the block mass solve
``M_A gamma = G u``.
"""

from __future__ import annotations

import numpy as np

from .assembly import AssembledSystem


def apply_Rh(sys: AssembledSystem, u: np.ndarray) -> np.ndarray:
    """Trial coefficients of ``R_h(a grad u_h)`` for a free-dof test vector ``u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (sys.V.ndofs,):
        raise ValueError(f"test vector must have {sys.V.ndofs} entries, got {u.shape}")
    return sys.M_solver.solve(sys.G @ u)


def h_inner(sys: AssembledSystem, p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = sys.W.ndofs
    if p.shape != (n,) or q.shape != (n,):
        raise ValueError(f"trial vectors must have {n} entries")
    return float(p @ (sys.M_A @ q))


def h_norm(sys: AssembledSystem, p: np.ndarray) -> float:
    return float(np.sqrt(max(h_inner(sys, p, p), 0.0)))
