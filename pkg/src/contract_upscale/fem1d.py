"""P1 finite elements for -u'' = f on (0, L), u(0) = u(L) = 0.

Both force models enter through the integrated-by-parts load

    f_j = -P h \\int rho phi_j' dx,

with rho the sum of cell kernels of width eps (agent-based) or the cell
density n_c (continuum).  Since phi_j' = +-1/h, only the mass of rho on each
element is needed: f_j = P (M(e_j) - M(e_{j-1})).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytic1d import ForceModel
from .cells import CellPopulation, DensityField, density_from_positions
from .errors import DataError, NumericalError
from .kernels import erf
from .mesh import Mesh1D

_GL16 = np.polynomial.legendre.leggauss(16)


@dataclass
class TridiagonalSystem:
    sub: np.ndarray    # sub[i] = A[i, i-1]; sub[0] unused
    diag: np.ndarray
    sup: np.ndarray    # sup[i] = A[i, i+1]; sup[-1] unused
    rhs: np.ndarray | None = None

    def to_dense(self) -> np.ndarray:
        n = len(self.diag)
        A = np.diag(self.diag)
        A[np.arange(1, n), np.arange(n - 1)] = self.sub[1:]
        A[np.arange(n - 1), np.arange(1, n)] = self.sup[:-1]
        return A


@dataclass(eq=False)
class FeSolution:
    """Nodal values of a P1 field: (n_nodes,) in 1D, (n_nodes, 2) in 2D."""

    mesh: object
    values: np.ndarray

    @property
    def dimension(self) -> int:
        return 1 if self.values.ndim == 1 else 2

    def __sub__(self, other: FeSolution) -> FeSolution:
        if other.mesh is not self.mesh and other.values.shape != self.values.shape:
            raise DataError("solutions live on different meshes")
        return FeSolution(self.mesh, self.values - other.values)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as f:
            if self.dimension == 1:
                f.write("x,u\n")
                for x, u in zip(self.mesh.nodes, self.values):
                    f.write(f"{x:.17g},{u:.17g}\n")
            else:
                f.write("x,y,ux,uy\n")
                for (x, y), (ux, uy) in zip(self.mesh.nodes, self.values):
                    f.write(f"{x:.17g},{y:.17g},{ux:.17g},{uy:.17g}\n")


@dataclass
class CaseResult:
    sph: FeSolution | None
    density: FeSolution | None
    timings: dict = field(default_factory=dict)
    cells: CellPopulation | None = None
    density_field: DensityField | None = None
    width: float | None = None


def assemble_stiffness_1d(mesh: Mesh1D) -> TridiagonalSystem:
    """Full (pre-boundary-condition) P1 stiffness matrix."""
    k = 1.0 / mesh.element_lengths()
    n = mesh.n_nodes
    diag = np.zeros(n)
    diag[:-1] += k
    diag[1:] += k
    sub = np.zeros(n)
    sup = np.zeros(n)
    sub[1:] = -k
    sup[:-1] = -k
    return TridiagonalSystem(sub=sub, diag=diag, sup=sup)


def _nodal_load(mesh: Mesh1D, masses: np.ndarray, P: float) -> np.ndarray:
    # f_j = -P h sum_e M_e / h_e * (dphi_j/dx h_e) with dphi_j = +1 on e_{j-1}, -1 on e_j
    w = P * mesh.h / mesh.element_lengths() * masses
    f = np.zeros(mesh.n_nodes)
    f[:-1] += w
    f[1:] -= w
    return f


def element_masses_sph(mesh: Mesh1D, cells: CellPopulation, eps: float) -> np.ndarray:
    """Kernel mass of all cells on every element, exact via erf differences."""
    x = cells.positions
    bad = (x <= 0.0) | (x >= mesh.L)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise DataError(f"cell {k} at x={x[k]} lies outside (0, {mesh.L})")
    masses = np.zeros(mesh.n_elements)
    c = np.sqrt(2.0) * eps
    chunk = max(1, 1_000_000 // mesh.n_nodes)
    for k in range(0, len(x), chunk):
        z = (mesh.nodes[None, :] - x[k:k + chunk, None]) / c
        e = erf(z)
        masses += 0.5 * np.sum(e[:, 1:] - e[:, :-1], axis=0)
    return masses


def element_masses_density(mesh: Mesh1D, density: DensityField) -> np.ndarray:
    """Integral of n_c over each element."""
    if not density.is_analytic:
        if density.mesh is not mesh and (density.mesh is None or density.mesh.n_elements != mesh.n_elements):
            raise DataError("piecewise-constant density lives on a different mesh")
        if density.counts is not None:
            return np.asarray(density.counts, dtype=float)
        return density.values * mesh.element_lengths()
    t, w = _GL16
    lo = mesh.nodes[:-1]
    hl = 0.5 * mesh.element_lengths()
    pts = (lo + hl)[:, None] + hl[:, None] * t[None, :]
    vals = np.asarray(density(pts.ravel()), dtype=float).reshape(pts.shape)
    return hl * (vals @ w)


def load_1d(mesh: Mesh1D, source, force: ForceModel) -> np.ndarray:
    """Load vector (before boundary conditions) for a CellPopulation (agent
    approach) or a DensityField (continuum approach)."""
    if isinstance(source, CellPopulation):
        eps = force.width_for(mesh.h)
        masses = element_masses_sph(mesh, source, eps)
    else:
        masses = element_masses_density(mesh, source)
    return _nodal_load(mesh, masses, force.magnitude)


def thomas(sub, diag, sup, rhs) -> np.ndarray:
    """Solve a tridiagonal system without pivoting."""
    n = len(diag)
    a = [float(v) for v in sub]
    b = [float(v) for v in diag]
    c = [float(v) for v in sup]
    d = [float(v) for v in rhs]
    cp = [0.0] * n
    dp = [0.0] * n
    for i in range(n):
        denom = b[i] - (a[i] * cp[i - 1] if i else 0.0)
        if denom == 0.0:
            raise NumericalError(f"zero pivot in row {i}")
        cp[i] = c[i] / denom if i < n - 1 else 0.0
        dp[i] = (d[i] - (a[i] * dp[i - 1] if i else 0.0)) / denom
    x = [0.0] * n
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)


def solve_dirichlet_1d(system: TridiagonalSystem, mesh: Mesh1D | None = None) -> FeSolution:
    """Eliminate the two boundary rows/columns (u = 0 there) and solve."""
    n = len(system.diag)
    rhs = np.zeros(n) if system.rhs is None else np.asarray(system.rhs, dtype=float)
    u = np.zeros(n)
    if n > 2:
        sub = system.sub[1:-1].copy()
        sup = system.sup[1:-1].copy()
        sub[0] = 0.0
        sup[-1] = 0.0
        u[1:-1] = thomas(sub, system.diag[1:-1], sup, rhs[1:-1])
    return FeSolution(mesh, u)


def solve_1d(mesh: Mesh1D, load: np.ndarray) -> FeSolution:
    system = assemble_stiffness_1d(mesh)
    system.rhs = load
    return solve_dirichlet_1d(system, mesh)


def run_case_1d(mesh: Mesh1D, force: ForceModel, *, cells: CellPopulation | None = None,
                density: DensityField | None = None, approach: str = "both") -> CaseResult:
    """Solve the agent-based and/or continuum problem on one mesh.

    With ``density`` given, the continuum side uses it directly (density ->
    positions pipeline; ``cells`` should be sampled from it).  Otherwise the
    density is counted from ``cells`` per element (positions -> density).
    Timings cover load assembly and solve.
    """
    res = CaseResult(sph=None, density=None, cells=cells, width=force.width_for(mesh.h))
    if approach in ("sph", "both"):
        if cells is None:
            raise DataError("the agent-based approach needs cell positions")
        t0 = time.perf_counter()
        res.sph = solve_1d(mesh, load_1d(mesh, cells, force))
        res.timings["sph"] = time.perf_counter() - t0
    if approach in ("density", "both"):
        t0 = time.perf_counter()
        if density is None:
            if cells is None:
                raise DataError("the continuum approach needs a density or cell positions")
            density = density_from_positions(mesh, cells)
        res.density = solve_1d(mesh, load_1d(mesh, density, force))
        res.timings["density"] = time.perf_counter() - t0
        res.density_field = density
    return res
