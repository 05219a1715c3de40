"""Uniform interval meshes and structured triangulations of rectangles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise DomainError(f"rectangle has non-positive sides: {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains(self, pts, strict=True) -> np.ndarray:
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        if strict:
            return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)
        return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)

    def inside(self, other: Rect) -> bool:
        return (other.x0 <= self.x0 and self.x1 <= other.x1
                and other.y0 <= self.y0 and self.y1 <= other.y1)


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray
    h: float

    @property
    def L(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.array([0, len(self.nodes) - 1])

    def element_lengths(self) -> np.ndarray:
        return np.diff(self.nodes)


def build_mesh_1d(L: float, h_target: float) -> Mesh1D:
    """Uniform mesh of (0, L) with ceil(L / h_target) elements."""
    if not (L > 0 and 0 < h_target < L):
        raise DomainError(f"need 0 < h_target < L, got L={L}, h_target={h_target}")
    n = math.ceil(L / h_target - 1e-12)
    nodes = np.linspace(0.0, L, n + 1)
    return Mesh1D(nodes=nodes, h=L / n)


@dataclass(frozen=True, eq=False)
class TriMesh2D:
    """Structured triangulation; quad (i, j) is split along its lower-left to
    upper-right diagonal into triangles 2q (below) and 2q + 1 (above), with
    q = j * nx + i."""

    nodes: np.ndarray        # (n_nodes, 2)
    triangles: np.ndarray    # (n_tri, 3), counterclockwise
    boundary_nodes: np.ndarray
    h: float                 # longest edge
    rect: Rect
    nx: int
    ny: int
    _geom: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def dx(self) -> float:
        return self.rect.width / self.nx

    @property
    def dy(self) -> float:
        return self.rect.height / self.ny

    def geometry(self):
        """(areas, grads) for all triangles; grads has shape (n_tri, 3, 2)."""
        if "areas" not in self._geom:
            areas, grads = _triangle_geometry(self.nodes[self.triangles])
            self._geom["areas"] = areas
            self._geom["grads"] = grads
        return self._geom["areas"], self._geom["grads"]

    def locate(self, pts) -> np.ndarray:
        """Index of a triangle containing each point (lowest index on ties)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = self.rect
        if not np.all(r.contains(pts, strict=False)):
            bad = int(np.flatnonzero(~r.contains(pts, strict=False))[0])
            raise DataError(f"point {bad} lies outside the mesh rectangle")
        fx = (pts[:, 0] - r.x0) / self.dx
        fy = (pts[:, 1] - r.y0) / self.dy
        best = np.full(len(pts), np.iinfo(np.int64).max, dtype=np.int64)
        verts = self.nodes[self.triangles]
        for di in (-1, 0):
            for dj in (-1, 0):
                i = np.clip(np.ceil(fx).astype(np.int64) + di, 0, self.nx - 1)
                j = np.clip(np.ceil(fy).astype(np.int64) + dj, 0, self.ny - 1)
                q = j * self.nx + i
                for t in (2 * q, 2 * q + 1):
                    lam = _barycentric(verts[t], pts)
                    ok = np.all(lam >= -1e-12, axis=1)
                    best = np.where(ok & (t < best), t, best)
        if np.any(best == np.iinfo(np.int64).max):
            raise DataError("point location failed")
        return best

    def interpolate(self, values, pts) -> np.ndarray:
        """P1 interpolation of nodal ``values`` (n_nodes, ...) at ``pts``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t = self.locate(pts)
        lam = _barycentric(self.nodes[self.triangles[t]], pts)
        vals = np.asarray(values)[self.triangles[t]]
        return np.einsum("pk,pk...->p...", lam, vals)


def _barycentric(verts, pts):
    # verts (n, 3, 2), pts (n, 2) -> (n, 3)
    a, b, c = verts[:, 0], verts[:, 1], verts[:, 2]
    v0 = b - a
    v1 = c - a
    v2 = pts - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


def _triangle_geometry(verts):
    x = verts[..., 0]
    y = verts[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    if np.any(det <= 0):
        k = int(np.flatnonzero(det <= 0)[0])
        raise DataError(f"triangle {k} is degenerate or clockwise")
    # grad lambda_k = (y_{k+1} - y_{k+2}, x_{k+2} - x_{k+1}) / det
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / det[:, None]
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / det[:, None]
    return 0.5 * det, np.stack([gx, gy], axis=2)


def element_geometry(mesh: TriMesh2D, k: int):
    """Area and the three barycentric-coordinate gradients of triangle k."""
    if not 0 <= k < mesh.n_elements:
        raise DomainError(f"element index {k} out of range")
    areas, grads = _triangle_geometry(mesh.nodes[mesh.triangles[k:k + 1]])
    return float(areas[0]), grads[0]


def triangle_geometry(verts):
    """Area and barycentric gradients for a single (3, 2) vertex array."""
    areas, grads = _triangle_geometry(np.asarray(verts, dtype=float)[None])
    return float(areas[0]), grads[0]


def _structured(rect: Rect, nx: int, ny: int) -> TriMesh2D:
    xs = np.linspace(rect.x0, rect.x1, nx + 1)
    ys = np.linspace(rect.y0, rect.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i = i.ravel()
    j = j.ravel()
    n00 = j * (nx + 1) + i
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([n00, n10, n11])
    tris[1::2] = np.column_stack([n00, n11, n01])
    jj, ii = np.divmod(np.arange(len(nodes)), nx + 1)
    boundary = np.flatnonzero((ii == 0) | (ii == nx) | (jj == 0) | (jj == ny))
    h = math.hypot(rect.width / nx, rect.height / ny)
    return TriMesh2D(nodes=nodes, triangles=tris, boundary_nodes=boundary,
                     h=h, rect=rect, nx=nx, ny=ny)


def build_tri_mesh_2d(rect: Rect, h_target: float) -> TriMesh2D:
    """Structured mesh, each quad cut along its rising diagonal; quads per side
    by the ceiling rule."""
    if not 0 < h_target < min(rect.width, rect.height):
        raise DomainError(f"need 0 < h_target < min side, got {h_target}")
    nx = math.ceil(rect.width / h_target - 1e-12)
    ny = math.ceil(rect.height / h_target - 1e-12)
    return _structured(rect, nx, ny)


def refine(mesh):
    """Halve the mesh size; nodes of the coarse mesh are kept."""
    if isinstance(mesh, Mesh1D):
        mids = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
        nodes = np.empty(2 * len(mesh.nodes) - 1)
        nodes[0::2] = mesh.nodes
        nodes[1::2] = mids
        return Mesh1D(nodes=nodes, h=mesh.h / 2)
    return _structured(mesh.rect, 2 * mesh.nx, 2 * mesh.ny)


def export_mesh_csv(mesh: TriMesh2D, nodes_path, elements_path) -> None:
    """Write ``x,y`` node rows and ``n0,n1,n2`` element rows."""
    with open(Path(nodes_path), "w", newline="") as f:
        f.write("x,y\n")
        for x, y in mesh.nodes:
            f.write(f"{x:.17g},{y:.17g}\n")
    with open(Path(elements_path), "w", newline="") as f:
        f.write("n0,n1,n2\n")
        for a, b, c in mesh.triangles:
            f.write(f"{a},{b},{c}\n")
