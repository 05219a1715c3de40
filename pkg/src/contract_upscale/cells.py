"""Cell populations, density fields and the conversions between them.

Two pipelines are supported.  Density -> positions: integrate an analytic
density over bins (length ``d`` in 1D, unit squares in 2D), round to a count
per bin and place that many cells inside the bin.  Positions -> density:
count cell centres per mesh element and divide by the element measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError
from .mesh import Mesh1D, Rect, TriMesh2D

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """The splitmix64 generator; portable and bit-exact."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Next value / 2**64, in [0, 1)."""
        return self.next_u64() / 18446744073709551616.0


@dataclass(frozen=True, eq=False)
class CellPopulation:
    positions: np.ndarray  # (n,) in 1D, (n, 2) in 2D
    dimension: int

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if self.dimension == 1:
            pos = pos.reshape(-1)
        elif self.dimension == 2:
            pos = pos.reshape(-1, 2)
        else:
            raise DomainError(f"dimension must be 1 or 2, got {self.dimension}")
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.positions)

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def spacing(self) -> float:
        """Uniform spacing of a sorted 1D population."""
        if self.dimension != 1 or len(self) < 2:
            raise DomainError("spacing needs a 1D population of at least 2 cells")
        return float((self.positions[-1] - self.positions[0]) / (len(self) - 1))

    def to_csv(self, path) -> None:
        write_cells_csv(self, path)


def uniform_cells_1d(a: float, b: float, n: int) -> CellPopulation:
    """n cells equally spaced on [a, b], endpoints included."""
    if n < 2:
        raise DomainError("a uniform layout needs at least 2 cells")
    return CellPopulation(np.linspace(a, b, n), 1)


def random_cells_1d(n: int, a: float, b: float, seed: int) -> CellPopulation:
    """n sorted points drawn uniformly on (a, b) from the splitmix64 stream."""
    if not b > a:
        raise DomainError("empty interval")
    rng = SplitMix64(seed)
    pts = [a + rng.uniform() * (b - a) for _ in range(n)]
    return CellPopulation(np.sort(np.array(pts, dtype=float)), 1)


def place_cells_random_2d(n: int, region: Rect, seed: int) -> CellPopulation:
    """n points in ``region``; x then y coordinate per point from splitmix64."""
    if n < 0:
        raise DomainError("cell count must be nonnegative")
    if not (region.width > 0 and region.height > 0):
        raise DomainError("empty region")
    rng = SplitMix64(seed)
    pts = np.empty((n, 2))
    for k in range(n):
        pts[k, 0] = region.x0 + rng.uniform() * region.width
        pts[k, 1] = region.y0 + rng.uniform() * region.height
    return CellPopulation(pts, 2)


# --- density fields ---------------------------------------------------------

_PRESETS_1D = ("gaussian1d", "sine1d", "constant")
_PRESETS_2D = ("gaussian2d", "constant2d")


@dataclass(frozen=True, eq=False)
class DensityField:
    """Cell density n_c.  Either a named analytic preset (``name``/``params``)
    or piecewise-constant per-element values on ``mesh``."""

    name: str | None = None
    params: dict = field(default_factory=dict)
    mesh: Mesh1D | TriMesh2D | None = None
    values: np.ndarray | None = None
    counts: np.ndarray | None = None

    @property
    def is_analytic(self) -> bool:
        return self.name is not None

    @property
    def dimension(self) -> int:
        if self.is_analytic:
            return 2 if self.name in _PRESETS_2D else 1
        return 1 if isinstance(self.mesh, Mesh1D) else 2

    def __call__(self, x):
        """Evaluate at points: (n,) in 1D, (n, 2) in 2D."""
        if not self.is_analytic:
            return self._eval_piecewise(x)
        p = self.params
        if self.name == "gaussian1d":
            x = np.asarray(x, dtype=float)
            sd = p["sd"]
            return p["amplitude"] / (math.sqrt(2 * math.pi) * sd) * np.exp(-(x - p["mean"]) ** 2 / (2 * sd * sd))
        if self.name == "sine1d":
            x = np.asarray(x, dtype=float)
            return p["amplitude"] * np.abs(np.sin(p["frequency"] * x))
        if self.name == "constant":
            return np.full(np.shape(x), float(p["value"]))
        if self.name == "gaussian2d":
            x = np.atleast_2d(np.asarray(x, dtype=float))
            r2 = x[:, 0] ** 2 + x[:, 1] ** 2
            return p["amplitude"] / (2 * math.pi) * np.exp(-0.5 * r2)
        if self.name == "constant2d":
            x = np.atleast_2d(np.asarray(x, dtype=float))
            return np.full(len(x), float(p["value"]))
        raise DomainError(f"unknown density preset {self.name!r}")

    def _eval_piecewise(self, x):
        if isinstance(self.mesh, Mesh1D):
            e = element_index_1d(self.mesh, np.asarray(x, dtype=float).reshape(-1))
            return self.values[e]
        return self.values[self.mesh.locate(x)]


def gaussian1d(amplitude=50.0, mean=3.5, sd=0.1) -> DensityField:
    return DensityField("gaussian1d", {"amplitude": amplitude, "mean": mean, "sd": sd})


def sine1d(amplitude=40.0, frequency=2.0) -> DensityField:
    return DensityField("sine1d", {"amplitude": amplitude, "frequency": frequency})


def gaussian2d(amplitude=50.0) -> DensityField:
    return DensityField("gaussian2d", {"amplitude": amplitude})


def constant_density(value: float, dimension: int = 1) -> DensityField:
    return DensityField("constant" if dimension == 1 else "constant2d", {"value": value})


@dataclass(frozen=True)
class SamplingConfig:
    bin_length: float = 0.35
    placement: str = "equispaced"   # or "seeded_random"
    seed: int = 0

    def __post_init__(self):
        if not self.bin_length > 0:
            raise DomainError("bin_length must be positive")
        if self.placement not in ("equispaced", "seeded_random"):
            raise DomainError(f"unknown placement {self.placement!r}")


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _midpoints(lo, hi, n):
    w = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * w, w


def sample_cells_1d(density: DensityField, L: float, cfg: SamplingConfig) -> CellPopulation:
    """Density -> positions on (0, L) using bins of length ``cfg.bin_length``."""
    if cfg.bin_length > L:
        raise DomainError("bin_length exceeds the domain length")
    n_bins = math.ceil(L / cfg.bin_length - 1e-12)
    rng = SplitMix64(cfg.seed) if cfg.placement == "seeded_random" else None
    out = []
    for k in range(n_bins):
        lo = k * cfg.bin_length
        hi = min((k + 1) * cfg.bin_length, L)
        xs, w = _midpoints(lo, hi, 64)
        vals = np.asarray(density(xs), dtype=float)
        if np.any(vals < 0):
            raise DataError(f"negative density in bin {k}")
        m = round_half_away(float(np.sum(vals) * w))
        width = hi - lo
        for c in range(m):
            if rng is None:
                out.append(lo + (c + 0.5) * width / m)
            else:
                out.append(lo + rng.uniform() * width)
    return CellPopulation(np.sort(np.array(out, dtype=float)), 1)


def sample_cells_2d(density: DensityField, domain: Rect, cfg: SamplingConfig) -> CellPopulation:
    """Density -> positions over unit squares tiling ``domain`` from its
    lower-left corner (last row/column possibly partial)."""
    nx = math.ceil(domain.width - 1e-12)
    ny = math.ceil(domain.height - 1e-12)
    rng = SplitMix64(cfg.seed) if cfg.placement == "seeded_random" else None
    out = []
    for j in range(ny):
        ylo = domain.y0 + j
        yhi = min(ylo + 1.0, domain.y1)
        for i in range(nx):
            xlo = domain.x0 + i
            xhi = min(xlo + 1.0, domain.x1)
            xs, wx = _midpoints(xlo, xhi, 16)
            ys, wy = _midpoints(ylo, yhi, 16)
            X, Y = np.meshgrid(xs, ys)
            vals = np.asarray(density(np.column_stack([X.ravel(), Y.ravel()])), dtype=float)
            if np.any(vals < 0):
                raise DataError(f"negative density in square ({i}, {j})")
            m = round_half_away(float(np.sum(vals) * wx * wy))
            if m == 0:
                continue
            if rng is None:
                g = math.ceil(math.sqrt(m) - 1e-12)
                sw = (xhi - xlo) / g
                sh = (yhi - ylo) / g
                for c in range(m):
                    r, q = divmod(c, g)
                    out.append((xlo + (q + 0.5) * sw, ylo + (r + 0.5) * sh))
            else:
                for _ in range(m):
                    px = xlo + rng.uniform() * (xhi - xlo)
                    py = ylo + rng.uniform() * (yhi - ylo)
                    out.append((px, py))
    return CellPopulation(np.array(out, dtype=float).reshape(-1, 2), 2)


def element_index_1d(mesh: Mesh1D, x: np.ndarray) -> np.ndarray:
    """Element containing each x; a point on a shared node goes to the left
    (lower-index) element."""
    e = np.searchsorted(mesh.nodes, x, side="left") - 1
    return np.clip(e, 0, mesh.n_elements - 1)


def density_from_positions(mesh: Mesh1D | TriMesh2D, cells: CellPopulation) -> DensityField:
    """Positions -> piecewise-constant density (count / element measure)."""
    if isinstance(mesh, Mesh1D):
        x = cells.positions
        outside = (x <= 0.0) | (x >= mesh.L)
        if np.any(outside):
            k = int(np.flatnonzero(outside)[0])
            raise DataError(f"cell {k} at x={x[k]} lies outside (0, {mesh.L})")
        e = element_index_1d(mesh, x)
        counts = np.bincount(e, minlength=mesh.n_elements).astype(float)
        measure = mesh.element_lengths()
    else:
        pts = cells.positions
        inside = mesh.rect.contains(pts, strict=True)
        if not np.all(inside):
            k = int(np.flatnonzero(~inside)[0])
            raise DataError(f"cell {k} at {tuple(pts[k])} lies outside the domain")
        e = mesh.locate(pts) if len(pts) else np.zeros(0, dtype=np.int64)
        counts = np.bincount(e, minlength=mesh.n_elements).astype(float)
        measure = mesh.geometry()[0]
    return DensityField(mesh=mesh, values=counts / measure, counts=counts)


# --- CSV --------------------------------------------------------------------

def write_cells_csv(cells: CellPopulation, path) -> None:
    with open(Path(path), "w", newline="") as f:
        if cells.dimension == 1:
            f.write("x\n")
            for x in cells.positions:
                f.write(f"{x:.17g}\n")
        else:
            f.write("x,y\n")
            for x, y in cells.positions:
                f.write(f"{x:.17g},{y:.17g}\n")


def read_cells_csv(path) -> CellPopulation:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header not in (["x"], ["x", "y"]):
        raise DataError(f"{path}: header must be 'x' or 'x,y', got {lines[0]!r}")
    dim = len(header)
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != dim:
            raise DataError(f"{path}:{n}: expected {dim} columns")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise DataError(f"{path}:{n}: not a number") from None
    arr = np.array(rows, dtype=float).reshape(-1, dim)
    if dim == 1:
        return CellPopulation(np.sort(arr[:, 0]), 1)
    return CellPopulation(arr, 2)
