"""Closed-form 1D solutions for uniformly spaced cells on (a, b).

``u_sph_exact`` superposes one erf-shaped solution per cell (dipole force of
width equal to the cell spacing, magnitude P times the spacing);
``u_density_exact`` is the Green's-function solution for the limiting load
P (delta(x - a) - delta(x - b)).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .cells import CellPopulation
from .errors import DomainError
from .kernels import erf


@dataclass(frozen=True)
class Domain1D:
    L: float
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 < self.a < self.b < self.L):
            raise DomainError(f"need 0 < a < b < L, got a={self.a}, b={self.b}, L={self.L}")


_POWER_RULE = re.compile(r"^\s*([0-9.eE+-]+)\s*\*\s*h\s*\^\s*([0-9.eE+-]+)\s*$")


def parse_width_rule(text) -> tuple[float, float] | float:
    """``mesh_third`` -> (1/3, 1); ``c*h^p`` -> (c, p); a number -> float."""
    if isinstance(text, (int, float)):
        return float(text)
    if isinstance(text, tuple):
        return (float(text[0]), float(text[1]))
    t = str(text).strip()
    if t == "mesh_third":
        return (1.0 / 3.0, 1.0)
    m = _POWER_RULE.match(t)
    if m:
        return (float(m.group(1)), float(m.group(2)))
    return float(t)


@dataclass(frozen=True)
class ForceModel:
    """Force magnitude P and the rule choosing the kernel width.

    ``width`` is ``"mesh_third"`` (h / 3), a positive number (fixed width), or
    a power law ``"c*h^p"``.  With p > 1 the width shrinks faster than the mesh
    size, as 2D consistency under refinement requires.
    """

    magnitude: float = 1.0
    width: str | float | tuple = "mesh_third"

    def __post_init__(self):
        if not math.isfinite(self.magnitude):
            raise DomainError("force magnitude must be finite")
        try:
            rule = parse_width_rule(self.width)
        except ValueError:
            raise DomainError(f"unrecognised width rule {self.width!r}") from None
        vals = rule if isinstance(rule, tuple) else (rule,)
        if not all(math.isfinite(v) for v in vals) or vals[0] <= 0:
            raise DomainError(f"width must be positive, got {self.width!r}")

    def width_for(self, h: float) -> float:
        rule = parse_width_rule(self.width)
        if isinstance(rule, tuple):
            c, p = rule
            return c * h**p
        return rule


def greens_1d(x, source: float, L: float):
    """Dirichlet Green's function of -u'' on (0, L)."""
    x = np.asarray(x, dtype=float)
    if not 0.0 < source < L:
        raise DomainError(f"source {source} must lie in (0, {L})")
    if np.any(x < 0.0) or np.any(x > L):
        raise DomainError("x must lie in [0, L]")
    g = (1.0 - source / L) * x - np.maximum(x - source, 0.0)
    return float(g) if g.ndim == 0 else g


def u_density_exact(x, dom: Domain1D, force: ForceModel):
    return force.magnitude * (greens_1d(x, dom.a, dom.L) - greens_1d(x, dom.b, dom.L))


def u_sph_exact(x, cells: CellPopulation, dom: Domain1D, force: ForceModel):
    """Superposed erf solution; width and force scale are the cell spacing."""
    if len(cells) < 2:
        raise DomainError("need at least 2 cells to define the spacing")
    ds = cells.spacing
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > dom.L):
        raise DomainError("x must lie in [0, L]")
    s = cells.positions
    L = dom.L
    c = math.sqrt(2.0) * ds
    left = erf(s / c)
    right = erf((L - s) / c)
    xs = np.atleast_1d(x)
    # cell-independent terms summed once; the x-dependent erf summed per point
    base = (xs / L - 1.0) * np.sum(left) + xs / L * np.sum(right)
    out = np.empty_like(xs)
    chunk = max(1, 2_000_000 // max(len(s), 1))
    for k in range(0, len(xs), chunk):
        z = (xs[k:k + chunk, None] - s[None, :]) / c
        out[k:k + chunk] = np.sum(erf(z), axis=1)
    u = 0.5 * force.magnitude * ds * (base - out)
    return float(u[0]) if x.ndim == 0 else u
