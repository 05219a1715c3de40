"""Plane-strain linear elasticity with P1 (constant-strain) triangles.

Both force models use the integrated-by-parts load

    f(phi) = -P \\int rho (div phi) dOmega,

with rho the sum of 2D Gaussian kernels (agent-based) or the cell density
(continuum).  div phi is constant on each triangle, so the load needs only
the mass of rho on each element.  Degrees of freedom are interleaved:
(ux_0, uy_0, ux_1, uy_1, ...).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .analytic1d import ForceModel
from .cells import CellPopulation, DensityField, density_from_positions
from .errors import DataError, DomainError, NumericalError
from .fem1d import CaseResult, FeSolution
from .mesh import TriMesh2D
from .quadrature import TRI7_BARY, TRI7_WEIGHTS, adaptive_integrate, quad_points, split4, tri7

KERNEL_CUTOFF = 6.0      # kernel support radius, in widths
KERNEL_TOL = 1e-8        # per-leaf tolerance relative to one cell's unit mass
CELL_CHUNK = 32          # cells per work unit; fixed so results do not depend on threads


@dataclass(frozen=True)
class MaterialParams:
    youngs_modulus: float = 1.0
    poisson_ratio: float = 0.3

    def __post_init__(self):
        if not (math.isfinite(self.youngs_modulus) and self.youngs_modulus > 0):
            raise DomainError(f"Young's modulus must be positive, got {self.youngs_modulus}")
        # 0.5 is excluded (1 - 2 nu divides lambda); nu = 0 decouples the axes and is allowed
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise DomainError(f"Poisson ratio must lie in [0, 0.5), got {self.poisson_ratio}")

    @property
    def lame(self) -> tuple[float, float]:
        E, nu = self.youngs_modulus, self.poisson_ratio
        mu = E / (2.0 * (1.0 + nu))
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return lam, mu


def elasticity_matrix(mat: MaterialParams) -> np.ndarray:
    """Voigt matrix acting on (eps11, eps22, 2 eps12)."""
    lam, mu = mat.lame
    return np.array([[2 * mu + lam, lam, 0.0],
                     [lam, 2 * mu + lam, 0.0],
                     [0.0, 0.0, mu]])


def _strain_matrices(grads):
    # grads (n, 3, 2) -> B (n, 3, 6)
    n = len(grads)
    B = np.zeros((n, 3, 6))
    B[:, 0, 0::2] = grads[:, :, 0]
    B[:, 1, 1::2] = grads[:, :, 1]
    B[:, 2, 0::2] = grads[:, :, 1]
    B[:, 2, 1::2] = grads[:, :, 0]
    return B


def element_stiffness(geom, mat: MaterialParams) -> np.ndarray:
    """6x6 stiffness A B^T D B of one triangle; ``geom`` = (area, grads)."""
    area, grads = geom
    if not area > 0:
        raise DataError("degenerate triangle")
    B = _strain_matrices(np.asarray(grads, dtype=float)[None])[0]
    return area * B.T @ elasticity_matrix(mat) @ B


def _element_dofs(mesh: TriMesh2D) -> np.ndarray:
    t = mesh.triangles
    dofs = np.empty((len(t), 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * t
    dofs[:, 1::2] = 2 * t + 1
    return dofs


def assemble_stiffness_2d(mesh: TriMesh2D, mat: MaterialParams) -> sp.csr_matrix:
    areas, grads = mesh.geometry()
    B = _strain_matrices(grads)
    D = elasticity_matrix(mat)
    Ke = areas[:, None, None] * np.einsum("nki,kl,nlj->nij", B, D, B)
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))   # exact symmetry of the global matrix
    dofs = _element_dofs(mesh)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = 2 * mesh.n_nodes
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray     # unconstrained dof indices

    @classmethod
    def dirichlet(cls, mesh: TriMesh2D, K, rhs) -> SparseSystem:
        fixed = np.zeros(2 * mesh.n_nodes, dtype=bool)
        fixed[2 * mesh.boundary_nodes] = True
        fixed[2 * mesh.boundary_nodes + 1] = True
        return cls(matrix=K, rhs=np.asarray(rhs, dtype=float), free=np.flatnonzero(~fixed))


# --- loads ------------------------------------------------------------------

def _scatter(mesh: TriMesh2D, masses: np.ndarray, P: float) -> np.ndarray:
    """f[a, c] = -P sum_e d(lambda_a)/dx_c * M_e."""
    _, grads = mesh.geometry()
    contrib = -P * grads * masses[:, None, None]          # (n_tri, 3, 2)
    f = np.zeros((mesh.n_nodes, 2))
    np.add.at(f, mesh.triangles.ravel(), contrib.reshape(-1, 2))
    return f.ravel()


def _candidate_pairs(mesh: TriMesh2D, pts: np.ndarray, radius: float):
    """(cell index, triangle index) for triangles whose bounding box is
    within ``radius`` of the cell."""
    r = mesh.rect
    cell_ids, tri_ids = [], []
    for k, (x, y) in enumerate(pts):
        i0 = max(int(math.floor((x - radius - r.x0) / mesh.dx)), 0)
        i1 = min(int(math.floor((x + radius - r.x0) / mesh.dx)), mesh.nx - 1)
        j0 = max(int(math.floor((y - radius - r.y0) / mesh.dy)), 0)
        j1 = min(int(math.floor((y + radius - r.y0) / mesh.dy)), mesh.ny - 1)
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1))
        xlo = r.x0 + ii * mesh.dx
        ylo = r.y0 + jj * mesh.dy
        dx = np.maximum(np.maximum(xlo - x, x - (xlo + mesh.dx)), 0.0)
        dy = np.maximum(np.maximum(ylo - y, y - (ylo + mesh.dy)), 0.0)
        near = dx * dx + dy * dy <= radius * radius
        q = (jj * mesh.nx + ii)[near]
        t = np.column_stack([2 * q, 2 * q + 1]).ravel()
        tri_ids.append(t)
        cell_ids.append(np.full(len(t), k, dtype=np.int64))
    if not tri_ids:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(cell_ids), np.concatenate(tri_ids)


def _kernel_masses_chunk(mesh: TriMesh2D, pts: np.ndarray, eps: float) -> np.ndarray:
    cell_ids, tri_ids = _candidate_pairs(mesh, pts, KERNEL_CUTOFF * eps)
    norm = 1.0 / (2.0 * math.pi * eps * eps)

    def gauss(points, owner):
        d = points - pts[owner][:, None, :]
        return norm * np.exp(-(d[..., 0] ** 2 + d[..., 1] ** 2) / (2.0 * eps * eps))

    verts = mesh.nodes[mesh.triangles[tri_ids]]
    vals = adaptive_integrate(verts, gauss, cell_ids, tol=KERNEL_TOL, min_edge=eps)
    masses = np.zeros(mesh.n_elements)
    np.add.at(masses, tri_ids, vals)
    return masses


def element_masses_sph_2d(mesh: TriMesh2D, cells: CellPopulation, eps: float,
                          threads: int = 1) -> np.ndarray:
    """Kernel mass of all cells on every triangle.

    Cells are processed in fixed-size chunks whose partial sums are merged in
    chunk order, so the result is identical for any thread count.
    """
    pts = cells.positions
    inside = mesh.rect.contains(pts, strict=True)
    if not np.all(inside):
        k = int(np.flatnonzero(~inside)[0])
        raise DataError(f"cell {k} at {tuple(pts[k])} lies outside the domain")
    chunks = [pts[k:k + CELL_CHUNK] for k in range(0, len(pts), CELL_CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _kernel_masses_chunk(mesh, c, eps), chunks))
    else:
        parts = [_kernel_masses_chunk(mesh, c, eps) for c in chunks]
    masses = np.zeros(mesh.n_elements)
    for p in parts:
        masses += p
    return masses


def element_masses_density_2d(mesh: TriMesh2D, density: DensityField) -> np.ndarray:
    if not density.is_analytic:
        if density.mesh is None or density.mesh.n_elements != mesh.n_elements:
            raise DataError("piecewise-constant density lives on a different mesh")
        if density.counts is not None:
            return np.asarray(density.counts, dtype=float)
        return density.values * mesh.geometry()[0]
    verts = mesh.nodes[mesh.triangles]

    def nc(points, owner):
        return np.asarray(density(points.reshape(-1, 2)), dtype=float).reshape(points.shape[:2])

    # smooth presets: 7-point rule on 16 congruent subtriangles per element
    kids = split4(split4(verts))
    return tri7(kids, nc, None).reshape(-1, 16).sum(axis=1)


def load_2d(mesh: TriMesh2D, source, force: ForceModel, threads: int = 1) -> np.ndarray:
    """Load vector (2 entries per node, before boundary conditions)."""
    if isinstance(source, CellPopulation):
        eps = force.width_for(mesh.h)
        masses = element_masses_sph_2d(mesh, source, eps, threads)
    else:
        masses = element_masses_density_2d(mesh, source)
    return _scatter(mesh, masses, force.magnitude)


def body_force_load(mesh: TriMesh2D, f) -> np.ndarray:
    """Consistent load for a body force ``f(points (m, 2)) -> (m, 2)``."""
    verts = mesh.nodes[mesh.triangles]
    pts = quad_points(verts)                              # (n, 7, 2)
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape)
    areas = mesh.geometry()[0]
    # int f_c phi_k = A sum_q w_q f_c(x_q) lambda_k(x_q)
    contrib = areas[:, None, None] * np.einsum("q,qk,nqc->nkc", TRI7_WEIGHTS, TRI7_BARY, vals)
    out = np.zeros((mesh.n_nodes, 2))
    np.add.at(out, mesh.triangles.ravel(), contrib.reshape(-1, 2))
    return out.ravel()


# --- solve ------------------------------------------------------------------

def pcg(A, b, tol: float = 1e-10, maxiter: int | None = None):
    """Jacobi-preconditioned conjugate gradients.

    Returns (x, residual history); raises NumericalError if the relative
    residual does not reach ``tol`` within ``maxiter`` (default 10 n).
    """
    n = len(b)
    if maxiter is None:
        maxiter = 10 * n
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n)
    if bnorm == 0.0:
        return x, [0.0]
    dinv = 1.0 / A.diagonal()
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    history = [1.0]
    for _ in range(maxiter):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise NumericalError("matrix is not positive definite", history)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = float(np.linalg.norm(r)) / bnorm
        history.append(rel)
        if rel <= tol:
            return x, history
        z = dinv * r
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise NumericalError(f"CG did not converge in {maxiter} iterations (residual {history[-1]:.3e})",
                         history)


def solve_dirichlet_2d(system: SparseSystem, mesh: TriMesh2D | None = None) -> FeSolution:
    free = system.free
    A = system.matrix[free][:, free]
    x, _ = pcg(A.tocsr(), system.rhs[free])
    u = np.zeros(len(system.rhs))
    u[free] = x
    return FeSolution(mesh, u.reshape(-1, 2))


def solve_2d(mesh: TriMesh2D, mat: MaterialParams, load: np.ndarray) -> FeSolution:
    K = assemble_stiffness_2d(mesh, mat)
    return solve_dirichlet_2d(SparseSystem.dirichlet(mesh, K, load), mesh)


def run_case_2d(mesh: TriMesh2D, mat: MaterialParams, force: ForceModel, *,
                cells: CellPopulation | None = None, density: DensityField | None = None,
                approach: str = "both", threads: int = 1) -> CaseResult:
    """2D analogue of :func:`contract_upscale.fem1d.run_case_1d`."""
    res = CaseResult(sph=None, density=None, cells=cells, width=force.width_for(mesh.h))
    if approach in ("sph", "both"):
        if cells is None:
            raise DataError("the agent-based approach needs cell positions")
        t0 = time.perf_counter()
        res.sph = solve_2d(mesh, mat, load_2d(mesh, cells, force, threads))
        res.timings["sph"] = time.perf_counter() - t0
    if approach in ("density", "both"):
        t0 = time.perf_counter()
        if density is None:
            if cells is None:
                raise DataError("the continuum approach needs a density or cell positions")
            density = density_from_positions(mesh, cells)
        res.density = solve_2d(mesh, mat, load_2d(mesh, density, force))
        res.timings["density"] = time.perf_counter() - t0
        res.density_field = density
    return res
