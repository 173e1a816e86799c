"""Interface-fitted simplicial meshes.

Structured generators for the four computational domains, red / Bey
uniform refinement, graded refinement towards a singular vertex, a
validator and the plain-text mesh format.

Cells are stored as ``(nc, d+1)`` vertex index arrays with positive signed
volume; every cell carries an integer subdomain tag starting at 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

GEOM_TOL = 1e-12


class InvalidParameter(ValueError):
    pass


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box together with a point classifier for the subdomains.

    ``classify`` maps an ``(n, d)`` array of points to integer tags; it is only
    required to be correct away from the interfaces.
    """

    name: str
    lower: tuple
    upper: tuple
    classify: Callable[[np.ndarray], np.ndarray]

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def on_boundary(self, pts: np.ndarray) -> np.ndarray:
        lo = np.abs(pts - np.asarray(self.lower)) < GEOM_TOL
        hi = np.abs(pts - np.asarray(self.upper)) < GEOM_TOL
        return np.any(lo | hi, axis=1)


def _tag_cross(p):
    return 1 + (p[:, 0] > 0.5).astype(int) + 2 * (p[:, 1] > 0.5).astype(int)


def _tag_vertical(p):
    return 1 + (p[:, 0] > 0.5).astype(int)


def _tag_none(p):
    return np.ones(len(p), dtype=int)


def _tag_first_quadrant(p):
    return np.where((p[:, 0] > 0) & (p[:, 1] > 0), 2, 1)


SQUARE_INTERFACES = {
    "cross-at-half": _tag_cross,
    "vertical-at-half": _tag_vertical,
    "none": _tag_none,
}


def square_domain(interface: str = "none") -> Domain:
    if interface not in SQUARE_INTERFACES:
        raise InvalidParameter(f"unknown interface descriptor {interface!r}")
    return Domain(f"unit-square/{interface}", (0.0, 0.0), (1.0, 1.0),
                  SQUARE_INTERFACES[interface])


def square2_domain() -> Domain:
    return Domain("square2", (-1.0, -1.0), (1.0, 1.0), _tag_first_quadrant)


def cube_domain() -> Domain:
    return Domain("unit-cube", (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), _tag_vertical)


def domain_by_name(name: str) -> Domain:
    """Inverse of ``Domain.name`` for the shipped domains."""
    if name.startswith("unit-square/"):
        return square_domain(name.split("/", 1)[1])
    if name == "square2":
        return square2_domain()
    if name == "unit-cube":
        return cube_domain()
    raise InvalidParameter(f"unknown domain {name!r}")


DOMAIN_NAMES = tuple(f"unit-square/{k}" for k in SQUARE_INTERFACES) + ("square2", "unit-cube")


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    cells: np.ndarray
    tags: np.ndarray
    domain: Optional[Domain] = None
    level: int = 1

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def subdomains(self) -> np.ndarray:
        return np.unique(self.tags)

    @cached_property
    def jacobians(self) -> np.ndarray:
        """``(nc, d, d)`` with columns ``x_i - x_0``."""
        x = self.vertices[self.cells]
        return np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        d = self.dim
        return np.linalg.det(self.jacobians) / float(np.prod(np.arange(1, d + 1)))

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """Constant gradients of the local P1 basis, shape ``(nc, d+1, d)``."""
        d = self.dim
        ref = np.vstack([-np.ones(d), np.eye(d)])  # (d+1, d)
        jinv = np.linalg.inv(self.jacobians)       # (nc, d, d)
        return np.einsum("kd,cde->cke", ref, jinv)

    @cached_property
    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted faces and the number of cells sharing each."""
        d = self.dim
        local = [c for c in itertools.combinations(range(d + 1), d)]
        allf = np.sort(self.cells[:, local].reshape(-1, d), axis=1)
        uniq, counts = np.unique(allf, axis=0, return_counts=True)
        return uniq, counts

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        f, counts = self.faces
        return np.unique(f[counts == 1])

    @cached_property
    def interface_vertices(self) -> np.ndarray:
        d = self.dim
        local = [c for c in itertools.combinations(range(d + 1), d)]
        allf = np.sort(self.cells[:, local].reshape(-1, d), axis=1)
        uniq, inv = np.unique(allf, axis=0, return_inverse=True)
        inv = inv.ravel()
        ftag = np.repeat(self.tags, d + 1)
        tmin = np.full(len(uniq), np.iinfo(np.int64).max)
        tmax = np.full(len(uniq), np.iinfo(np.int64).min)
        np.minimum.at(tmin, inv, ftag)
        np.maximum.at(tmax, inv, ftag)
        return np.unique(uniq[tmin != tmax])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges ``(ne, 2)`` and the cell-to-edge map ``(nc, n_local)``.

        Local edge ordering is lexicographic in the local vertex pair.
        """
        local = list(itertools.combinations(range(self.dim + 1), 2))
        alle = np.sort(self.cells[:, local].reshape(-1, 2), axis=1)
        uniq, inv = np.unique(alle, axis=0, return_inverse=True)
        return uniq, inv.reshape(self.n_cells, len(local))

    def edge_lengths_at(self, vertex: int) -> np.ndarray:
        e, _ = self.edges()
        mask = np.any(e == vertex, axis=1)
        v = self.vertices[e[mask, 0]] - self.vertices[e[mask, 1]]
        return np.linalg.norm(v, axis=1)

    def h(self) -> float:
        e, _ = self.edges()
        return float(np.max(np.linalg.norm(
            self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)))

    def find_vertex(self, point) -> int:
        dist = np.linalg.norm(self.vertices - np.asarray(point, float), axis=1)
        i = int(np.argmin(dist))
        if dist[i] > GEOM_TOL:
            raise InvalidParameter(f"no vertex at {point}")
        return i


def _orient(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Swap two vertices of every negatively oriented cell."""
    x = vertices[cells]
    jac = np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))
    neg = np.linalg.det(jac) < 0
    cells = cells.copy()
    if cells.shape[1] == 3:
        cells[neg, 1], cells[neg, 2] = cells[neg, 2], cells[neg, 1].copy()
    else:
        # 0 <-> 2 keeps the Bey diagonal pairing {0,2},{1,3}
        cells[neg, 0], cells[neg, 2] = cells[neg, 2], cells[neg, 0].copy()
    return cells


def _check_n(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 2 or n % 2:
        raise InvalidParameter(f"cells per side must be even and >= 2, got {n}")


def _structured_triangles(n: int, lower, upper, domain: Domain) -> Mesh:
    _check_n(n)
    xs = np.linspace(lower[0], upper[0], n + 1)
    ys = np.linspace(lower[1], upper[1], n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ll = (j * (n + 1) + i).ravel()
    lr, ul, ur = ll + 1, ll + n + 1, ll + n + 2
    # diagonal ll -> ur in every square
    cells = np.stack([np.column_stack([ll, lr, ur]),
                      np.column_stack([ll, ur, ul])], axis=1).reshape(-1, 3)
    mesh = Mesh(vertices, cells, np.ones(len(cells), dtype=int), domain)
    return replace(mesh, tags=domain.classify(mesh.barycenters))


def unit_square_mesh(n: int, interface: str = "none") -> Mesh:
    """Structured triangulation of the unit square with ``n`` cells per side."""
    return _structured_triangles(n, (0.0, 0.0), (1.0, 1.0), square_domain(interface))


def square2_mesh(n: int) -> Mesh:
    """Structured triangulation of (-1,1)^2; first quadrant tagged 2."""
    return _structured_triangles(n, (-1.0, -1.0), (1.0, 1.0), square2_domain())


def unit_cube_mesh(n: int) -> Mesh:
    """Kuhn triangulation of the unit cube, six tetrahedra per grid cube."""
    _check_n(n)
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    idx = np.arange(n)
    I, J, K = (a.ravel() for a in np.meshgrid(idx, idx, idx, indexing="ij"))
    unit = np.eye(3, dtype=int)
    cells = []
    for perm in itertools.permutations(range(3)):
        steps = [np.zeros(3, dtype=int)]
        for ax in perm:
            steps.append(steps[-1] + unit[ax])
        cells.append(np.column_stack([vid(I + s[0], J + s[1], K + s[2]) for s in steps]))
    cells = np.stack(cells, axis=1).reshape(-1, 4)
    domain = cube_domain()
    cells = _orient(vertices, cells)
    mesh = Mesh(vertices, cells, np.ones(len(cells), dtype=int), domain)
    return replace(mesh, tags=domain.classify(mesh.barycenters))


def _split_points(mesh: Mesh, edges: np.ndarray, singular: Optional[int], kappa: float):
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    pts = 0.5 * (a + b)
    if singular is not None:
        at_a = edges[:, 0] == singular
        at_b = edges[:, 1] == singular
        pts[at_a] = a[at_a] + kappa * (b[at_a] - a[at_a])
        pts[at_b] = b[at_b] + kappa * (a[at_b] - b[at_b])
    return pts


# local edge numbering from Mesh.edges(): (0,1) (0,2) (1,2)
_RED = [(0, "01", "02"), ("01", 1, "12"), ("02", "12", 2), ("01", "12", "02")]
# (0,1) (0,2) (0,3) (1,2) (1,3) (2,3)
_BEY = [(0, "01", "02", "03"), ("01", 1, "12", "13"), ("02", "12", 2, "23"),
        ("03", "13", "23", 3), ("01", "02", "03", "13"), ("01", "02", "12", "13"),
        ("02", "03", "13", "23"), ("02", "12", "13", "23")]


def _refine(mesh: Mesh, singular: Optional[int] = None, kappa: float = 0.5) -> Mesh:
    d = mesh.dim
    edges, c2e = mesh.edges()
    new_pts = _split_points(mesh, edges, singular, kappa)
    nv = mesh.n_vertices
    vertices = np.vstack([mesh.vertices, new_pts])
    local = {f"{i}{j}": k for k, (i, j) in enumerate(itertools.combinations(range(d + 1), 2))}

    def col(key):
        if isinstance(key, int):
            return mesh.cells[:, key]
        return nv + c2e[:, local[key]]

    rule = _RED if d == 2 else _BEY
    children = np.stack([np.column_stack([col(k) for k in child]) for child in rule], axis=1)
    cells = children.reshape(-1, d + 1)
    cells = _orient(vertices, cells)
    tags = np.repeat(mesh.tags, len(rule))
    return Mesh(vertices, cells, tags, mesh.domain, mesh.level + 1)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Red refinement (2D, 1 -> 4) or Bey refinement (3D, 1 -> 8)."""
    return _refine(mesh)


def graded_refine(mesh: Mesh, singular_vertex: int, kappa: float) -> Mesh:
    """One refinement generation, splitting edges at ``singular_vertex`` at ratio ``kappa``.

    An edge from the singular vertex P to Q is split at ``P + kappa (Q - P)``;
    every other edge at its midpoint. Children are formed as in red refinement,
    so the result is conforming.
    """
    if not (0.0 < kappa <= 0.5):
        raise InvalidParameter(f"kappa must lie in (0, 1/2], got {kappa}")
    if mesh.dim != 2:
        raise InvalidParameter("graded refinement is implemented for triangles only")
    if not (0 <= singular_vertex < mesh.n_vertices):
        raise InvalidParameter(f"vertex {singular_vertex} not in mesh")
    return _refine(mesh, singular_vertex, kappa)


@dataclass
class ValidationReport:
    volume: list = field(default_factory=list)
    conformity: list = field(default_factory=list)
    interface: list = field(default_factory=list)
    boundary: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.volume or self.conformity or self.interface or self.boundary)

    def __bool__(self) -> bool:
        # truthy when there is something to report
        return not self.ok

    def lines(self) -> list[str]:
        out = []
        for kind in ("volume", "conformity", "interface", "boundary"):
            out.extend(f"{kind}: {msg}" for msg in getattr(self, kind))
        return out


def validate(mesh: Mesh) -> ValidationReport:
    """Check the mesh invariants; an empty report means the mesh is valid."""
    rep = ValidationReport()
    d = mesh.dim
    if np.any(~np.isfinite(mesh.vertices)):
        rep.volume.append("non-finite vertex coordinates")
    if mesh.cells.min() < 0 or mesh.cells.max() >= mesh.n_vertices:
        rep.conformity.append("cell references a missing vertex")
        return rep

    srt = np.sort(mesh.cells, axis=1)
    degenerate = np.flatnonzero(np.any(np.diff(srt, axis=1) == 0, axis=1))
    for c in degenerate:
        rep.volume.append(f"cell {c} repeats a vertex")
    scale = mesh.h() ** d if mesh.n_cells else 1.0
    bad = np.flatnonzero(mesh.signed_volumes <= 1e-14 * scale)
    for c in bad:
        rep.volume.append(f"cell {c} has nonpositive volume {mesh.signed_volumes[c]:.3e}")

    _, first, counts = np.unique(np.round(mesh.vertices / GEOM_TOL / 1e3).astype(np.int64),
                                 axis=0, return_index=True, return_counts=True)
    for i in first[counts > 1]:
        rep.conformity.append(f"vertex {i} is duplicated")

    faces, fcount = mesh.faces
    for f in faces[fcount > 2]:
        rep.conformity.append(f"face {tuple(f)} shared by more than two cells")

    dom = mesh.domain
    if dom is not None:
        outer = faces[fcount == 1]
        # a boundary face must lie on a single side of the box
        fx = mesh.vertices[outer]  # (nf, d, d)
        lo = np.all(np.abs(fx - np.asarray(dom.lower)) < GEOM_TOL, axis=1)
        hi = np.all(np.abs(fx - np.asarray(dom.upper)) < GEOM_TOL, axis=1)
        for k in np.flatnonzero(~np.any(lo | hi, axis=1)):
            rep.conformity.append(f"face {tuple(outer[k])} is unmatched inside the domain")
        total = mesh.volumes.sum()
        if abs(total - dom.volume) > 1e-10 * dom.volume:
            rep.conformity.append(f"cells cover volume {total:.12g}, domain has {dom.volume:.12g}")
        on_bd = dom.on_boundary(mesh.vertices[mesh.boundary_vertices])
        for v in mesh.boundary_vertices[~on_bd]:
            rep.boundary.append(f"boundary vertex {v} not on the domain boundary")

        # sample points strictly inside each cell must all carry the cell's tag
        x = mesh.vertices[mesh.cells]
        bc = x.mean(axis=1, keepdims=True)
        samples = np.concatenate([bc, 0.9 * x + 0.1 * bc], axis=1)
        got = dom.classify(samples.reshape(-1, d)).reshape(mesh.n_cells, -1)
        wrong = np.flatnonzero(np.any(got != mesh.tags[:, None], axis=1))
        for c in wrong:
            rep.interface.append(f"cell {c} (tag {mesh.tags[c]}) is not inside one subdomain")
        if len(wrong) == 0:
            iv = mesh.interface_vertices
            if len(iv):
                p = mesh.vertices[iv]
                # every interface vertex touches cells of two classifications
                eps = 1e-7
                offsets = np.array(list(itertools.product([-eps, eps], repeat=d)))
                near = dom.classify((p[:, None, :] + offsets[None]).reshape(-1, d))
                near = near.reshape(len(iv), -1)
                flat = np.all(near == near[:, :1], axis=1)
                for v in iv[flat]:
                    rep.interface.append(f"interface vertex {v} is not on an interface")
    return rep


def write_mesh(mesh: Mesh, path) -> None:
    """Write the text format: ``dim nv nc``, coordinates, then ``v0 .. vd tag``."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells}\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        np.savetxt(fh, np.column_stack([mesh.cells, mesh.tags]), fmt="%d")


def read_mesh(path, domain: Optional[Domain] = None) -> Mesh:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: bad header {header!r}")
        dim, nv, nc = (int(t) for t in header)
        coords = np.loadtxt(fh, max_rows=nv, ndmin=2)
        conn = np.loadtxt(fh, max_rows=nc, dtype=np.int64, ndmin=2)
    if coords.shape != (nv, dim) or conn.shape != (nc, dim + 2):
        raise ValueError(f"{path}: sizes do not match header")
    return Mesh(coords, conn[:, :-1], conn[:, -1], domain)
