"""Norms, convergence rates, reduction ratios and the comparison report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DataError
from .fem1d import CaseResult, FeSolution
from .mesh import Mesh1D, Rect

APPROACHES = ("sph", "density")
RATE_DEFINITION = "log2(||u_h - u_h/2|| / ||u_h/2 - u_h/4||), coarse levels interpolated to the finest mesh"
H1_DEFINITION = "full H1 norm: sqrt(||u||_L2^2 + |u|_H1^2)"


def _quadratic_forms(sol: FeSolution):
    """(sum_c u_c^T M u_c, sum_c u_c^T K u_c) with the P1 mass and Laplace
    stiffness matrices, summed over displacement components."""
    mesh = sol.mesh
    u = sol.values
    if isinstance(mesh, Mesh1D):
        h = mesh.element_lengths()
        ul, ur = u[:-1], u[1:]
        l2 = np.sum(h / 6.0 * (2 * ul * ul + 2 * ur * ur + 2 * ul * ur))
        semi = np.sum((ur - ul) ** 2 / h)
        return float(l2), float(semi)
    areas, grads = mesh.geometry()
    ue = u[mesh.triangles]                      # (n_tri, 3, 2)
    s = ue.sum(axis=1)
    # area/12 [[2,1,1],[1,2,1],[1,1,2]] == area/12 (diag(1) + ones)
    l2 = np.sum(areas[:, None] / 12.0 * (np.sum(ue * ue, axis=1) + s * s))
    g = np.einsum("tkd,tkc->tdc", grads, ue)
    semi = np.sum(areas[:, None, None] * g * g)
    return float(l2), float(semi)


def norm_l2(sol: FeSolution) -> float:
    return math.sqrt(max(_quadratic_forms(sol)[0], 0.0))


def seminorm_h1(sol: FeSolution) -> float:
    return math.sqrt(max(_quadratic_forms(sol)[1], 0.0))


def norm_h1(sol: FeSolution) -> float:
    l2, semi = _quadratic_forms(sol)
    return math.sqrt(max(l2 + semi, 0.0))


def norm_linf(sol: FeSolution) -> float:
    return float(np.max(np.abs(sol.values))) if sol.values.size else 0.0


def rate_from_differences(coarse: float, fine: float, ratio: float = 2.0):
    """log_ratio(coarse / fine); None when indeterminate."""
    if not (coarse > 0 and fine > 0 and math.isfinite(coarse) and math.isfinite(fine)):
        return None
    return math.log(coarse / fine) / math.log(ratio)


def convergence_rate(values, ratio: float = 2.0):
    """Rate from a quantity observed at h, h/ratio, h/ratio^2."""
    v0, v1, v2 = (float(v) for v in values)
    return rate_from_differences(abs(v0 - v1), abs(v1 - v2), ratio)


def interpolate_to(sol: FeSolution, mesh) -> FeSolution:
    """Nodal P1 interpolation of ``sol`` onto ``mesh``."""
    if sol.mesh is mesh:
        return sol
    if isinstance(mesh, Mesh1D):
        return FeSolution(mesh, np.interp(mesh.nodes, sol.mesh.nodes, sol.values))
    return FeSolution(mesh, sol.mesh.interpolate(sol.values, mesh.nodes))


def ladder_differences(sols):
    """Successive differences ||u_k - u_{k+1}|| (L2, H1) on the finest mesh."""
    finest = sols[-1].mesh
    on_fine = [interpolate_to(s, finest) for s in sols]
    out = []
    for a, b in zip(on_fine[:-1], on_fine[1:]):
        d = a - b
        out.append((norm_l2(d), norm_h1(d)))
    return out


def solution_rates(sols, ratio: float = 2.0) -> dict:
    """L2 and H1 rates from three solutions at h, h/ratio, h/ratio^2."""
    if len(sols) != 3:
        raise DataError("a rate needs exactly three refinement levels")
    (l2a, h1a), (l2b, h1b) = ladder_differences(sols)
    return {"l2": rate_from_differences(l2a, l2b, ratio),
            "h1": rate_from_differences(h1a, h1b, ratio)}


def _evaluate_1d(u, x: float) -> float:
    if isinstance(u, FeSolution):
        return float(np.interp(x, u.mesh.nodes, u.values))
    return float(u(x))


def reduction_ratio_1d(u, a: float, b: float) -> float:
    """Percentage shortening of (a, b); positive under contraction."""
    ua = _evaluate_1d(u, a)
    ub = _evaluate_1d(u, b)
    new = (b + ub) - (a + ua)
    if new <= 0:
        raise DataError(f"deformed subdomain is inverted (length {new}); parameters are nonphysical")
    return 100.0 * ((b - a) - new) / (b - a)


def rectangle_boundary(region: Rect, spacing: float) -> np.ndarray:
    """Counterclockwise samples of the rectangle perimeter, corners included."""
    pts = []
    corners = [(region.x0, region.y0), (region.x1, region.y0),
               (region.x1, region.y1), (region.x0, region.y1)]
    for k in range(4):
        p = np.array(corners[k])
        q = np.array(corners[(k + 1) % 4])
        n = max(1, math.ceil(np.linalg.norm(q - p) / spacing - 1e-9))
        t = np.arange(n) / n
        pts.append(p[None, :] + t[:, None] * (q - p)[None, :])
    return np.vstack(pts)


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counterclockwise)."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_self_intersects(poly: np.ndarray) -> bool:
    n = len(poly)
    p = poly
    q = np.roll(poly, -1, axis=0)

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    d1 = orient(p[i], q[i], p[j])
    d2 = orient(p[i], q[i], q[j])
    d3 = orient(p[j], q[j], p[i])
    d4 = orient(p[j], q[j], q[i])
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))


def deformed_boundary(sol: FeSolution, region: Rect, spacing: float | None = None) -> np.ndarray:
    """Region boundary sampled at mesh resolution and moved by the P1 field."""
    mesh = sol.mesh
    if not region.inside(mesh.rect):
        raise DataError("region must lie inside the mesh rectangle")
    if spacing is None:
        spacing = min(mesh.dx, mesh.dy)
    pts = rectangle_boundary(region, spacing)
    return pts + mesh.interpolate(sol.values, pts)


def reduction_ratio_2d(sol: FeSolution, region: Rect) -> float:
    """Percentage area decrease of ``region`` under the displacement field."""
    poly = deformed_boundary(sol, region)
    if polygon_self_intersects(poly):
        raise DataError("deformed subdomain boundary self-intersects")
    a_def = polygon_area(poly)
    return 100.0 * (region.area - a_def) / region.area


# --- report -----------------------------------------------------------------

def _pair(sph=None, density=None) -> dict:
    return {"sph": sph, "density": density}


@dataclass
class ComparisonReport:
    l2_norm: dict = field(default_factory=_pair)
    h1_norm: dict = field(default_factory=_pair)
    rates: dict = field(default_factory=lambda: {a: {"l2": None, "h1": None} for a in APPROACHES})
    reduction_ratio_percent: dict = field(default_factory=_pair)
    wall_time_seconds: dict = field(default_factory=_pair)
    diff_linf: float | None = None
    diff_l2: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return dumps({f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def from_json(cls, text: str) -> ComparisonReport:
        data = json.loads(text)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise DataError(f"unknown report fields: {sorted(unknown)}")
        return cls(**data)


def _same_mesh(m1, m2) -> bool:
    if m1 is m2:
        return True
    return m1.nodes.shape == m2.nodes.shape and np.array_equal(m1.nodes, m2.nodes)


def _ratio(sol, subdomain):
    if isinstance(sol.mesh, Mesh1D):
        return reduction_ratio_1d(sol, *subdomain)
    return reduction_ratio_2d(sol, subdomain)


def build_report(case: CaseResult, subdomain, ladder: list[CaseResult] | None = None,
                 metadata: dict | None = None) -> ComparisonReport:
    """Collect norms, rates, ratios, timings and differences for one solver pair.

    ``subdomain`` is ``(a, b)`` in 1D or a :class:`Rect` in 2D.  ``ladder``
    (three nested levels, coarse first) supplies the convergence rates.
    """
    rep = ComparisonReport(metadata=dict(metadata or {}))
    rep.metadata.setdefault("rate_definition", RATE_DEFINITION)
    rep.metadata.setdefault("h1_definition", H1_DEFINITION)
    sols = {"sph": case.sph, "density": case.density}
    if case.sph is not None and case.density is not None:
        if not _same_mesh(case.sph.mesh, case.density.mesh):
            raise DataError("the two approaches were solved on different meshes")
        d = case.sph - case.density
        rep.diff_linf = norm_linf(d)
        rep.diff_l2 = norm_l2(d)
    for name, sol in sols.items():
        if sol is None:
            rep.rates[name] = None
            continue
        rep.l2_norm[name] = norm_l2(sol)
        rep.h1_norm[name] = norm_h1(sol)
        rep.wall_time_seconds[name] = float(case.timings.get(name, 0.0))
        try:
            rep.reduction_ratio_percent[name] = _ratio(sol, subdomain)
        except DataError as exc:
            rep.metadata.setdefault("warnings", []).append(f"{name}: {exc}")
        if ladder is not None and len(ladder) >= 3:
            rep.rates[name] = solution_rates([getattr(c, name) for c in ladder[:3]])
    return rep


# --- JSON with 17 significant digits -----------------------------------------

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = f"{x:.17g}"
    if all(ch in "-0123456789" for ch in s):
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats written at 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")
