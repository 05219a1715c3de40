"""Command-line front end: ``contract-upscale run|convergence|sample-cells``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical or I/O failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .analytic1d import Domain1D, ForceModel
from .cells import (CellPopulation, DensityField, SamplingConfig, place_cells_random_2d,
                    random_cells_1d, read_cells_csv, sample_cells_1d, sample_cells_2d,
                    uniform_cells_1d, write_cells_csv)
from .config import ConfigError, RunConfig, parse_config
from .errors import DataError, DomainError, NumericalError
from .fem1d import CaseResult, run_case_1d
from .fem2d import MaterialParams, run_case_2d
from .mesh import Rect, build_mesh_1d, build_tri_mesh_2d, refine
from .metrics import APPROACHES, build_report, deformed_boundary, dumps, ladder_differences, rate_from_differences

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3


# --- problem setup ----------------------------------------------------------

def domain_rect(cfg: RunConfig) -> Rect:
    return Rect(*cfg.domain)


def subdomain(cfg: RunConfig):
    if cfg.dimension == 1:
        Domain1D(cfg.L, *cfg.subdomain)
        return tuple(cfg.subdomain)
    return Rect(*cfg.subdomain)


def density_field(cfg: RunConfig) -> DensityField | None:
    if cfg.density is None:
        return None
    return DensityField(cfg.density, cfg.density_params())


def make_cells(cfg: RunConfig) -> CellPopulation:
    layout = cfg.cell_layout
    if layout == "uniform":
        return uniform_cells_1d(*cfg.subdomain, cfg.cell_count)
    if layout == "random":
        if cfg.dimension == 1:
            return random_cells_1d(cfg.cell_count, *cfg.subdomain, cfg.seed)
        return place_cells_random_2d(cfg.cell_count, Rect(*cfg.subdomain), cfg.seed)
    if layout == "file":
        cells = read_cells_csv(cfg.cells_file)
        if cells.dimension != cfg.dimension:
            raise DataError(f"{cfg.cells_file}: {cells.dimension}D cells in a {cfg.dimension}D run")
        return cells
    sampling = SamplingConfig(cfg.bin_length, cfg.placement, cfg.seed)
    dens = density_field(cfg)
    if cfg.dimension == 1:
        return sample_cells_1d(dens, cfg.L, sampling)
    return sample_cells_2d(dens, domain_rect(cfg), sampling)


def mesh_ladder(cfg: RunConfig, n_levels: int):
    """Nested meshes: explicit ``h_levels`` or halving from ``h``."""
    build = ((lambda h: build_mesh_1d(cfg.L, h)) if cfg.dimension == 1
             else (lambda h: build_tri_mesh_2d(domain_rect(cfg), h)))
    if cfg.h_levels is not None:
        return [build(h) for h in cfg.h_levels[:n_levels]]
    meshes = [build(cfg.h)]
    while len(meshes) < n_levels:
        meshes.append(refine(meshes[-1]))
    return meshes


def solve_level(cfg: RunConfig, mesh, cells: CellPopulation) -> CaseResult:
    force = ForceModel(cfg.P, cfg.width)
    density = density_field(cfg) if cfg.pipeline == "from_density" else None
    if cfg.dimension == 1:
        return run_case_1d(mesh, force, cells=cells, density=density, approach=cfg.approach)
    return run_case_2d(mesh, MaterialParams(cfg.E, cfg.nu), force, cells=cells,
                       density=density, approach=cfg.approach, threads=cfg.threads)


def _metadata(cfg: RunConfig, mesh, case: CaseResult, cells: CellPopulation) -> dict:
    meta = {
        "dimension": cfg.dimension,
        "h": mesh.h,
        "n_elements": int(mesh.n_elements),
        "N_s": cells.count,
        "seed": cfg.seed,
        "pipeline": cfg.pipeline,
        "approach": cfg.approach,
        "cell_layout": cfg.cell_layout,
        "P": cfg.P,
        "width_rule": str(cfg.width),
        "width": case.width,
    }
    if cfg.density is not None:
        meta["density"] = cfg.density
        meta["density_params"] = cfg.density_params()
    if cfg.dimension == 2:
        meta["E"] = cfg.E
        meta["nu"] = cfg.nu
    return meta


def _report(cfg, mesh, case, cells):
    rep = build_report(case, subdomain(cfg), metadata=_metadata(cfg, mesh, case, cells))
    if cfg.timing == "omitted":
        rep.wall_time_seconds = {a: None for a in APPROACHES}
    return rep


# --- commands ---------------------------------------------------------------

def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(text)


def cmd_run(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    sub = subdomain(cfg)
    cells = make_cells(cfg)
    mesh = mesh_ladder(cfg, 1)[0]
    case = solve_level(cfg, mesh, cells)
    write_cells_csv(cells, out / "cells.csv")
    for name in APPROACHES:
        sol = getattr(case, name)
        if sol is None:
            continue
        sol.to_csv(out / f"solution_{name}.csv")
        if cfg.dimension == 2:
            poly = deformed_boundary(sol, sub)
            _write_text(out / f"boundary_deformed_{name}.csv",
                        "x,y\n" + "".join(f"{x:.17g},{y:.17g}\n" for x, y in poly))
    rep = _report(cfg, mesh, case, cells)
    _write_text(out / "report.json", rep.to_json() + "\n")
    ratios = rep.reduction_ratio_percent
    print(f"reduction ratio (%): sph={ratios['sph']} density={ratios['density']}")
    return EXIT_OK


def _rate_triples(meshes, diffs):
    """Rates from each run of three consecutive levels with a common ratio."""
    out = []
    for k in range(len(diffs) - 1):
        r1 = meshes[k].h / meshes[k + 1].h
        r2 = meshes[k + 1].h / meshes[k + 2].h
        entry = {"levels": [k, k + 1, k + 2], "refinement_ratio": r1}
        for name, d in diffs.items():
            if d is None:
                entry[name] = None
            elif not math.isclose(r1, r2, rel_tol=1e-9):
                entry[name] = {"l2": None, "h1": None}
            else:
                entry[name] = {"l2": rate_from_differences(d[k][0], d[k + 1][0], r1),
                               "h1": rate_from_differences(d[k][1], d[k + 1][1], r1)}
        if not math.isclose(r1, r2, rel_tol=1e-9):
            entry["note"] = "unequal refinement ratios; rate undefined"
        out.append(entry)
    return out


def cmd_convergence(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    cells = make_cells(cfg)
    n_levels = len(cfg.h_levels) if cfg.h_levels is not None else cfg.levels
    meshes = mesh_ladder(cfg, n_levels)
    cases = [solve_level(cfg, m, cells) for m in meshes]
    write_cells_csv(cells, out / "cells.csv")
    levels = []
    for mesh, case in zip(meshes, cases):
        rep = _report(cfg, mesh, case, cells)
        levels.append({
            "h": mesh.h,
            "n_elements": int(mesh.n_elements),
            "width": case.width,
            "l2_norm": rep.l2_norm,
            "h1_norm": rep.h1_norm,
            "reduction_ratio_percent": rep.reduction_ratio_percent,
            "wall_time_seconds": rep.wall_time_seconds,
            "diff_linf": rep.diff_linf,
            "diff_l2": rep.diff_l2,
            "warnings": rep.metadata.get("warnings", []),
        })
    diffs = {}
    for name in APPROACHES:
        sols = [getattr(c, name) for c in cases]
        diffs[name] = None if sols[0] is None else ladder_differences(sols)
    doc = {
        "levels": levels,
        "successive_differences": {
            name: None if d is None else [{"l2": a, "h1": b} for a, b in d]
            for name, d in diffs.items()
        },
        "rates": _rate_triples(meshes, diffs),
        "metadata": {k: v for k, v in _metadata(cfg, meshes[0], cases[0], cells).items()
                     if k not in ("h", "n_elements", "width")},
    }
    _write_text(out / "ladder.json", dumps(doc) + "\n")
    for lv in levels:
        print(f"h={lv['h']:.6g} diff_linf={lv['diff_linf']} diff_l2={lv['diff_l2']}")
    return EXIT_OK


def cmd_sample_cells(cfg: RunConfig) -> int:
    if cfg.density is None:
        raise ConfigError([(0, "density", "sample-cells needs a density preset")])
    out = _out_dir(cfg)
    sampling = SamplingConfig(cfg.bin_length, cfg.placement, cfg.seed)
    dens = density_field(cfg)
    if cfg.dimension == 1:
        cells = sample_cells_1d(dens, cfg.L, sampling)
    else:
        cells = sample_cells_2d(dens, domain_rect(cfg), sampling)
    write_cells_csv(cells, out / "cells.csv")
    print(f"{cells.count} cells written to {out / 'cells.csv'}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "sample-cells": cmd_sample_cells}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contract-upscale",
                                description="Agent-based vs continuum contraction solvers.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="unsigned 64-bit seed (overrides the config)")
    p.add_argument("--threads", type=int, help="worker threads for the 2D agent-based load")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    overrides = []
    if args.out is not None:
        overrides.append(f"out = {args.out}")
    if args.seed is not None:
        overrides.append(f"seed = {args.seed}")
    if args.threads is not None:
        overrides.append(f"threads = {args.threads}")
    try:
        cfg = parse_config(_override(text, overrides))
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        for line in exc.format_lines():
            print(f"error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (DataError, OSError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def _override(text: str, lines: list[str]) -> str:
    """Drop config lines for overridden keys and append the overrides."""
    keys = {ln.split("=", 1)[0].strip() for ln in lines}
    kept = [ln if ln.split("#", 1)[0].split("=", 1)[0].strip() not in keys else ""
            for ln in text.splitlines()]
    # blanked rather than removed so reported line numbers stay correct
    return "\n".join(kept + lines) + "\n"


if __name__ == "__main__":
    sys.exit(main())
