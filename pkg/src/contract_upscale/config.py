"""Flat ``key = value`` run configuration.

Every line is ``key = value``; ``#`` starts a comment.  Lists (domain,
subdomain, h_levels) are comma separated.  Parsing collects every problem it
finds and raises one :class:`ConfigError` listing them all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .analytic1d import parse_width_rule


class ConfigError(ValueError):
    """All validation problems of one config, each as (line, key, message)."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.format_lines()))

    def format_lines(self):
        out = []
        for line, key, msg in self.problems:
            where = f"line {line}" if line else "config"
            out.append(f"{where}: {key}: {msg}")
        return out


PRESETS = {
    "gaussian1d": (1, {"amplitude": 50.0, "mean": 3.5, "sd": 0.1}),
    "sine1d": (1, {"amplitude": 40.0, "frequency": 2.0}),
    "constant": (1, {"value": 0.0}),
    "gaussian2d": (2, {"amplitude": 50.0}),
    "constant2d": (2, {"value": 0.0}),
}
DENSITY_PARAMS = ("amplitude", "mean", "sd", "frequency", "value")


@dataclass
class RunConfig:
    dimension: int = 1
    L: float | None = None              # 1D only; default 7
    domain: tuple | None = None          # (x0, y0, x1, y1), 2D only
    subdomain: tuple | None = None       # (a, b) or (x0, y0, x1, y1)
    approach: str = "both"
    pipeline: str = "from_positions"
    density: str | None = None
    density_amplitude: float | None = None
    density_mean: float | None = None
    density_sd: float | None = None
    density_frequency: float | None = None
    density_value: float | None = None
    cell_layout: str | None = None       # uniform | random | sampled | file
    cell_count: int | None = None
    cells_file: str | None = None
    seed: int = 0
    h: float | None = None
    bin_length: float = 0.35
    placement: str = "equispaced"
    P: float = 1.0
    width: str = "mesh_third"
    E: float = 1.0
    nu: float = 0.3
    levels: int = 3
    h_levels: tuple | None = None
    threads: int = 1
    timing: str = "measured"
    out: str = "out"

    def density_params(self) -> dict:
        """Preset parameters with unset keys filled from the preset defaults."""
        if self.density is None:
            return {}
        params = dict(PRESETS[self.density][1])
        for k in params:
            v = getattr(self, f"density_{k}")
            if v is not None:
                params[k] = v
        return params

    def ladder(self) -> list[float]:
        if self.h_levels is not None:
            return list(self.h_levels)
        return [self.h / 2**k for k in range(self.levels)]

    def to_text(self) -> str:
        """Serialise to config text; ``parse_config(cfg.to_text()) == cfg``."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name} = {_format_value(v)}")
        return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


# --- field parsers ----------------------------------------------------------

def _int(text):
    return int(text, 10)


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise ValueError("must be an unsigned 64-bit integer")
    return v


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _floats(text):
    return tuple(_float(p.strip()) for p in text.split(","))


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _width(text):
    parse_width_rule(text)
    return text


_PARSERS = {
    "dimension": _int,
    "L": _float,
    "domain": _floats,
    "subdomain": _floats,
    "approach": _choice("sph", "density", "both"),
    "pipeline": _choice("from_density", "from_positions"),
    "density": _choice(*PRESETS),
    "cell_layout": _choice("uniform", "random", "sampled", "file"),
    "cell_count": _int,
    "cells_file": str,
    "seed": _u64,
    "h": _float,
    "bin_length": _float,
    "placement": _choice("equispaced", "seeded_random"),
    "P": _float,
    "width": _width,
    "E": _float,
    "nu": _float,
    "levels": _int,
    "h_levels": _floats,
    "threads": _int,
    "timing": _choice("measured", "omitted"),
    "out": str,
}
for _k in DENSITY_PARAMS:
    _PARSERS[f"density_{_k}"] = _float


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` with every problem."""
    problems = []
    values = {}
    where = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append((n, line, "expected 'key = value'"))
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            problems.append((n, key, "unknown key"))
            continue
        if key in values:
            problems.append((n, key, f"duplicate key (first set on line {where[key]})"))
            continue
        try:
            values[key] = _PARSERS[key](val)
            where[key] = n
        except ValueError as exc:
            problems.append((n, key, f"invalid value {val!r}: {exc}"))
    cfg = RunConfig(**values)
    problems += [(where.get(k, 0), k, msg) for k, msg in _validate(cfg, set(values))]
    if problems:
        raise ConfigError(sorted(problems, key=lambda p: (p[0], p[1])))
    return cfg


def _validate(cfg: RunConfig, given: set) -> list[tuple[str, str]]:
    """Range and consistency checks; fills dimension-dependent defaults."""
    err = []
    if cfg.dimension not in (1, 2):
        return [("dimension", "must be 1 or 2")]
    two_d = cfg.dimension == 2
    if two_d:
        if cfg.L is not None:
            err.append(("L", "only used in 1D; give domain instead"))
        if cfg.domain is None:
            cfg.domain = (-10.0, -10.0, 10.0, 10.0)
        if cfg.subdomain is None:
            cfg.subdomain = (-5.0, -5.0, 5.0, 5.0)
        for key in ("domain", "subdomain"):
            r = getattr(cfg, key)
            if len(r) != 4:
                err.append((key, "needs x0, y0, x1, y1"))
            elif not (r[2] > r[0] and r[3] > r[1]):
                err.append((key, "needs x0 < x1 and y0 < y1"))
        if not err:
            d, s = cfg.domain, cfg.subdomain
            if not (d[0] < s[0] and s[2] < d[2] and d[1] < s[1] and s[3] < d[3]):
                err.append(("subdomain", "must lie strictly inside domain"))
    else:
        if cfg.domain is not None:
            err.append(("domain", "only used in 2D; give L instead"))
        if cfg.L is None:
            cfg.L = 7.0
        if cfg.subdomain is None:
            cfg.subdomain = (2.0, 5.0)
        if not cfg.L > 0:
            err.append(("L", "must be positive"))
        if len(cfg.subdomain) != 2:
            err.append(("subdomain", "needs a, b"))
        elif not 0 < cfg.subdomain[0] < cfg.subdomain[1] < cfg.L:
            err.append(("subdomain", f"needs 0 < a < b < L = {cfg.L:g}"))

    if cfg.density is not None:
        if PRESETS[cfg.density][0] != cfg.dimension:
            err.append(("density", f"preset {cfg.density} is not {cfg.dimension}D"))
        allowed = PRESETS[cfg.density][1]
        for k in DENSITY_PARAMS:
            if f"density_{k}" in given and k not in allowed:
                err.append((f"density_{k}", f"not a parameter of {cfg.density}"))
        for k, v in cfg.density_params().items():
            if k in ("sd",) and not v > 0:
                err.append((f"density_{k}", "must be positive"))
            if k in ("amplitude", "value") and v < 0:
                err.append((f"density_{k}", "density must be nonnegative"))
    else:
        for k in DENSITY_PARAMS:
            if f"density_{k}" in given:
                err.append((f"density_{k}", "set without a density preset"))

    if cfg.cell_layout is None:
        if cfg.cells_file is not None:
            cfg.cell_layout = "file"
        elif cfg.density is not None:
            cfg.cell_layout = "sampled"
        else:
            cfg.cell_layout = "random" if two_d else "uniform"
    if cfg.cell_layout in ("uniform", "random"):
        if cfg.cell_count is None:
            err.append(("cell_count", f"required for cell_layout = {cfg.cell_layout}"))
        elif cfg.cell_count < (2 if cfg.cell_layout == "uniform" else 0):
            err.append(("cell_count", "too small for this layout"))
        if cfg.cell_layout == "uniform" and two_d:
            err.append(("cell_layout", "uniform layout is 1D only"))
    if cfg.cell_layout == "sampled" and cfg.density is None:
        err.append(("cell_layout", "sampled cells need a density preset"))
    if cfg.cell_layout == "file" and cfg.cells_file is None:
        err.append(("cells_file", "required for cell_layout = file"))
    if cfg.pipeline == "from_density" and cfg.density is None:
        err.append(("pipeline", "from_density needs a density preset"))

    if cfg.h is None and cfg.h_levels is None:
        err.append(("h", "required (or give h_levels)"))
    elif cfg.h is not None and not cfg.h > 0:
        err.append(("h", "must be positive"))
    if cfg.h_levels is not None:
        hl = cfg.h_levels
        if len(hl) < 3:
            err.append(("h_levels", "a ladder needs at least 3 mesh sizes"))
        if any(not x > 0 for x in hl) or any(b >= a for a, b in zip(hl, hl[1:])):
            err.append(("h_levels", "must be positive and strictly decreasing"))
        if cfg.h is None:
            cfg.h = hl[0]
    if cfg.levels < 3:
        err.append(("levels", "a convergence ladder needs at least 3 levels"))
    if not cfg.bin_length > 0:
        err.append(("bin_length", "must be positive"))
    if not cfg.E > 0:
        err.append(("E", "Young's modulus must be positive"))
    if not 0.0 <= cfg.nu < 0.5:
        err.append(("nu", "Poisson ratio must satisfy 0 <= nu < 0.5 (the 0.5 endpoint is excluded)"))
    try:
        rule = parse_width_rule(cfg.width)
        lead = rule[0] if isinstance(rule, tuple) else rule
        if not lead > 0:
            err.append(("width", "must be positive"))
    except ValueError:
        err.append(("width", "expected mesh_third, a number or c*h^p"))
    if cfg.threads < 1:
        err.append(("threads", "must be at least 1"))
    return err
