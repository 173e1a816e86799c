"""Coefficient fields and benchmark problems with closed-form solutions.

All fields are evaluated on ``(n, d)`` point arrays together with the
subdomain tag of the cell each point belongs to, so piecewise-defined
solutions pick their branch from the mesh rather than from the coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from . import mesh as meshmod

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CoefficientField:
    """Scalar coefficient ``a`` with ``A = a I``.

    Either ``values`` (per-subdomain constants) or ``func`` (a function of the
    coordinates) is given.
    """

    a_min: float
    a_max: float
    values: Optional[Mapping[int, float]] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def piecewise_constant(self) -> bool:
        return self.values is not None

    def __call__(self, x: np.ndarray, tags: np.ndarray) -> np.ndarray:
        if self.values is not None:
            tags = np.asarray(tags)
            out = np.empty(tags.shape, dtype=float)
            for t, a in self.values.items():
                out[tags == t] = a
            return out
        return self.func(x)

    def per_subdomain(self, tags) -> np.ndarray:
        return np.array([self.values[int(t)] for t in tags])

    @classmethod
    def constant(cls, a: float = 1.0, tags=(1,)) -> "CoefficientField":
        return cls(a, a, values={int(t): float(a) for t in tags})

    @classmethod
    def piecewise(cls, values: Mapping[int, float]) -> "CoefficientField":
        vals = {int(k): float(v) for k, v in values.items()}
        if min(vals.values()) <= 0:
            raise ValueError("coefficient must be positive")
        return cls(min(vals.values()), max(vals.values()), values=vals)


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    dim: int
    coefficient: CoefficientField
    f: Field
    make_mesh: Callable[[int], "meshmod.Mesh"]
    exact_u: Optional[Field] = None
    exact_grad: Optional[Field] = None
    singular_point: Optional[tuple] = None
    error_quad: int = 5
    params: dict = field(default_factory=dict)
    boundary_data: bool = False     # exact_u does not vanish on the boundary

    def dirichlet_values(self, mesh, vertices) -> np.ndarray:
        """Exact solution at the given vertices, branch chosen geometrically."""
        if not self.boundary_data:
            return np.zeros(len(vertices))
        pts = mesh.vertices[vertices]
        return self.exact_u(pts, mesh.domain.classify(pts))

    def exact_flux(self, x: np.ndarray, tags: np.ndarray) -> np.ndarray:
        """``a(x) grad u(x)`` on the branch selected by ``tags``."""
        if self.exact_grad is None:
            raise ValueError(f"problem {self.name!r} has no exact solution")
        return self.coefficient(x, tags)[:, None] * self.exact_grad(x, tags)


def exact_flux_eval(spec: ProblemSpec, x, tags) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return spec.exact_flux(x, np.broadcast_to(np.asarray(tags), (len(x),)))


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")


# -- intersecting interfaces on the unit square ------------------------------------

def make_intersecting(c: float) -> ProblemSpec:
    """Cross-shaped interface; ``a = 1`` on the lower-left / upper-right quadrants."""
    _positive("c", c)
    coef = CoefficientField.piecewise({1: 1.0, 2: c, 3: c, 4: 1.0})
    tp = 2.0 * np.pi

    def f(x, tags):
        return 2.0 * tp**2 * np.sin(tp * x[:, 0]) * np.sin(tp * x[:, 1])

    def u(x, tags):
        return np.sin(tp * x[:, 0]) * np.sin(tp * x[:, 1]) / coef(x, tags)

    def grad(x, tags):
        sx, sy = np.sin(tp * x[:, 0]), np.sin(tp * x[:, 1])
        cx, cy = np.cos(tp * x[:, 0]), np.cos(tp * x[:, 1])
        g = tp * np.column_stack([cx * sy, sx * cy])
        return g / coef(x, tags)[:, None]

    return ProblemSpec("intersecting", 2, coef, f,
                       lambda n: meshmod.unit_square_mesh(n, "cross-at-half"),
                       u, grad, params={"c": c})


# -- corner singularity on (-1,1)^2 ------------------------------------------------

def singular_exponent(k: float) -> float:
    return 4.0 / np.pi * np.arctan(np.sqrt((3.0 + k) / (1.0 + 3.0 * k)))


def make_singular(k: float) -> ProblemSpec:
    """``u = r^lam (1-r)^2 mu(theta)`` with ``a = k`` on the open first quadrant."""
    _positive("k", k)
    lam = singular_exponent(k)
    b = -k * np.sin(lam * np.pi / 4.0) / np.sin(lam * 3.0 * np.pi / 4.0)
    coef = CoefficientField.piecewise({1: 1.0, 2: k})

    def polar(x):
        r = np.hypot(x[:, 0], x[:, 1])
        # angle measured from the bisector theta = pi/4, wrapped to (-pi, pi]
        c, s = np.cos(np.pi / 4.0), np.sin(np.pi / 4.0)
        phi = np.arctan2(-s * x[:, 0] + c * x[:, 1], c * x[:, 0] + s * x[:, 1])
        return r, phi

    def mu(phi, tags):
        inner = tags == 2
        m = np.where(inner, np.cos(lam * phi), b * np.cos(lam * (np.pi - np.abs(phi))))
        dm = np.where(inner, -lam * np.sin(lam * phi),
                      b * lam * np.sign(phi) * np.sin(lam * (np.pi - np.abs(phi))))
        return m, dm

    def radial(r):
        with np.errstate(divide="ignore", invalid="ignore"):
            rl = np.where(r > 0, r**lam, 0.0)
            g = rl * (1.0 - r) ** 2
            dg = np.where(r > 0, r ** (lam - 1.0) * (1.0 - r)
                          * (lam * (1.0 - r) - 2.0 * r), 0.0)
            lap = np.where(r > 0, -2.0 * (2.0 * lam + 1.0) * r ** (lam - 1.0)
                           + 4.0 * (lam + 1.0) * rl, 0.0)
        return g, dg, lap

    def u(x, tags):
        r, phi = polar(x)
        return radial(r)[0] * mu(phi, np.asarray(tags))[0]

    def grad(x, tags):
        r, phi = polar(x)
        g, dg, _ = radial(r)
        m, dm = mu(phi, np.asarray(tags))
        theta = phi + np.pi / 4.0
        with np.errstate(divide="ignore", invalid="ignore"):
            g_over_r = np.where(r > 0, g / np.where(r > 0, r, 1.0), 0.0)
        ur, ut = dg * m, g_over_r * dm
        ct, st = np.cos(theta), np.sin(theta)
        return np.column_stack([ur * ct - ut * st, ur * st + ut * ct])

    def f(x, tags):
        # r^lam mu is a-harmonic on each piece, so only the (1-r)^2 factor contributes
        r, phi = polar(x)
        return -coef(x, tags) * radial(r)[2] * mu(phi, np.asarray(tags))[0]

    return ProblemSpec("singular", 2, coef, f, meshmod.square2_mesh, u, grad,
                       singular_point=(0.0, 0.0), error_quad=6,
                       params={"k": k, "lambda": lam, "b": b}, boundary_data=True)


# -- unit cube with a planar interface ---------------------------------------------

def make_cube(k: float) -> ProblemSpec:
    """``a = 1`` for ``x < 1/2`` and ``a = k`` otherwise, piecewise cubic-quadratic solution."""
    _positive("k", k)
    coef = CoefficientField.piecewise({1: 1.0, 2: k})

    def factors(x, tags):
        left = np.asarray(tags) == 1
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        # left: k x(x-1/2) y(y-1) z(z-1); right: (x-1/2)(x-1) y(y-1) z(1-z)
        scale = np.where(left, k, -1.0)
        px = np.where(left, X * (X - 0.5), (X - 0.5) * (X - 1.0))
        dpx = np.where(left, 2.0 * X - 0.5, 2.0 * X - 1.5)
        py, dpy = Y * (Y - 1.0), 2.0 * Y - 1.0
        pz, dpz = Z * (Z - 1.0), 2.0 * Z - 1.0
        return scale, (px, py, pz), (dpx, dpy, dpz)

    def u(x, tags):
        s, (px, py, pz), _ = factors(x, tags)
        return s * px * py * pz

    def grad(x, tags):
        s, (px, py, pz), (dx, dy, dz) = factors(x, tags)
        return s[:, None] * np.column_stack([dx * py * pz, px * dy * pz, px * py * dz])

    def f(x, tags):
        s, (px, py, pz), _ = factors(x, tags)
        lap = 2.0 * s * (py * pz + px * pz + px * py)
        return -coef(x, tags) * lap

    return ProblemSpec("cube", 3, coef, f, lambda n: meshmod.unit_cube_mesh(n), u, grad,
                       params={"k": k})


# -- highly oscillatory smooth coefficient -----------------------------------------

def make_oscillatory(eps: float, P: float = 1.8) -> ProblemSpec:
    """``a = 1 / (4 + P (sin(2 pi x/eps) + sin(2 pi y/eps)))`` with a bubble-type solution."""
    _positive("eps", eps)
    if not 0.0 < P < 2.0:
        raise ValueError(f"P must lie in (0, 2), got {P}")
    w = 2.0 * np.pi / eps
    C = np.sqrt(4.0 - P * P) / 2.0

    def a(x):
        return 1.0 / (4.0 + P * (np.sin(w * x[:, 0]) + np.sin(w * x[:, 1])))

    coef = CoefficientField(1.0 / (4.0 + 2.0 * P), 1.0 / (4.0 - 2.0 * P), func=a)

    def exponent_terms(t):
        # E(t) = 1/(t^3 - t) and its first two derivatives
        q = t**3 - t
        dq = 3.0 * t**2 - 1.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            E = 1.0 / q
            dE = -dq / q**2
            ddE = -6.0 * t / q**2 + 2.0 * dq**2 / q**3
        return E, dE, ddE

    def parts(x):
        X, Y = x[:, 0], x[:, 1]
        Ex, dEx, ddEx = exponent_terms(X)
        Ey, dEy, ddEy = exponent_terms(Y)
        interior = (X > 0) & (X < 1) & (Y > 0) & (Y < 1)
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            ex = np.where(interior, np.exp(np.where(interior, Ex + Ey, -np.inf)), 0.0)
        rho = X**2 + Y**2
        return X, Y, rho, ex, (dEx, ddEx), (dEy, ddEy), interior

    def u(x, tags=None):
        X, Y, rho, ex, *_ = parts(x)
        return C * rho * ex

    def grad(x, tags=None):
        X, Y, rho, ex, (dEx, _), (dEy, _), interior = parts(x)
        with np.errstate(invalid="ignore", over="ignore"):
            gx = np.where(interior, C * ex * (2.0 * X + rho * dEx), 0.0)
            gy = np.where(interior, C * ex * (2.0 * Y + rho * dEy), 0.0)
        return np.column_stack([gx, gy])

    def f(x, tags=None):
        X, Y, rho, ex, (dEx, ddEx), (dEy, ddEy), interior = parts(x)
        with np.errstate(invalid="ignore", over="ignore"):   # 0 * inf on the boundary, masked below
            uxx = C * ex * (2.0 + 4.0 * X * dEx + rho * (ddEx + dEx**2))
            uyy = C * ex * (2.0 + 4.0 * Y * dEy + rho * (ddEy + dEy**2))
            ux = C * ex * (2.0 * X + rho * dEx)
            uy = C * ex * (2.0 * Y + rho * dEy)
        av = a(x)
        ax = -av**2 * P * w * np.cos(w * X)
        ay = -av**2 * P * w * np.cos(w * Y)
        val = -(ax * ux + ay * uy + av * (uxx + uyy))
        return np.where(interior, val, 0.0)

    return ProblemSpec("oscillatory", 2, coef, f,
                       lambda n: meshmod.unit_square_mesh(n, "none"), u, grad,
                       params={"eps": eps, "P": P})


PROBLEMS = {
    "intersecting": make_intersecting,
    "singular": make_singular,
    "cube": make_cube,
    "oscillatory": make_oscillatory,
}


def make_problem(name: str, **params) -> ProblemSpec:
    try:
        builder = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return builder(**params)
