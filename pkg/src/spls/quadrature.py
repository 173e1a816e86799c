"""Quadrature on the reference triangle and tetrahedron.

Weights are normalised to sum to one, so an integral over a cell ``T`` is
``|T| * sum(w * f(x_q))``. Low degrees use classical symmetric rules; the
remaining degrees fall back to collapsed Gauss-Jacobi product rules, which
are exact to any requested degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 6


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, d+1) barycentric coordinates
    weights: np.ndarray  # (nq,), sum to 1
    degree: int

    @property
    def dim(self) -> int:
        return self.points.shape[1] - 1


def _gauss_jacobi01(n: int, alpha: float):
    """Gauss rule on [0, 1] for the weight ``(1 - t)**alpha``, weights summing to 1."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / w.sum()


def _collapsed(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    n = degree // 2 + 1
    if dim == 2:
        t0, w0 = _gauss_jacobi01(n, 1.0)
        t1, w1 = _gauss_jacobi01(n, 0.0)
        T0, T1 = (a.ravel() for a in np.meshgrid(t0, t1, indexing="ij"))
        W = np.outer(w0, w1).ravel()
        x = T0
        y = T1 * (1.0 - T0)
        cart = np.column_stack([x, y])
    else:
        t0, w0 = _gauss_jacobi01(n, 2.0)
        t1, w1 = _gauss_jacobi01(n, 1.0)
        t2, w2 = _gauss_jacobi01(n, 0.0)
        T0, T1, T2 = (a.ravel() for a in np.meshgrid(t0, t1, t2, indexing="ij"))
        W = np.einsum("i,j,k->ijk", w0, w1, w2).ravel()
        x = T0
        y = T1 * (1.0 - T0)
        z = T2 * (1.0 - T0) * (1.0 - T1)
        cart = np.column_stack([x, y, z])
    bary = np.column_stack([1.0 - cart.sum(axis=1), cart])
    return bary, W


def _symmetric(dim: int, degree: int):
    if dim == 2 and degree == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        return pts, np.full(3, 1.0 / 3.0)
    if dim == 2 and degree == 5:
        # Radon's 7-point rule
        s15 = np.sqrt(15.0)
        a1, a2 = (6.0 - s15) / 21.0, (6.0 + s15) / 21.0
        w1, w2 = (155.0 - s15) / 1200.0, (155.0 + s15) / 1200.0
        pts = [[1 / 3, 1 / 3, 1 / 3]]
        for a in (a1, a2):
            b = 1.0 - 2.0 * a
            pts += [[b, a, a], [a, b, a], [a, a, b]]
        w = np.array([9.0 / 40.0] + [w1] * 3 + [w2] * 3)
        return np.array(pts), w
    if dim == 3 and degree == 2:
        a = (5.0 - np.sqrt(5.0)) / 20.0
        b = 1.0 - 3.0 * a
        pts = np.full((4, 4), a)
        np.fill_diagonal(pts, b)
        return pts, np.full(4, 0.25)
    return None


@lru_cache(maxsize=None)
def simplex_quadrature(dim: int, degree: int) -> QuadratureRule:
    """Rule exact for polynomials of total degree ``<= degree`` on a ``dim``-simplex."""
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if not (0 <= degree <= MAX_DEGREE):
        raise ValueError(f"unsupported quadrature degree {degree} (max {MAX_DEGREE})")
    if degree <= 1:
        pts = np.full((1, dim + 1), 1.0 / (dim + 1))
        return QuadratureRule(pts, np.ones(1), degree)
    rule = _symmetric(dim, degree) or _collapsed(dim, degree)
    pts, w = rule
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)
