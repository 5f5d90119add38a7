"""Command-line front end.

    saw-qnm solve --catalog R9 --band 2.9e9:3.3e9 --output modes.csv
    saw-qnm field --catalog R9 --mode 0 --output field.csv
    saw-qnm sweep --vary n_mirror --values 0,200,250 --catalog R9
    saw-qnm sweep --catalog-all
    saw-qnm analytics --qr 225000 --qm 100000
    saw-qnm fit --input trace.csv
    saw-qnm catalog

Exit codes: 0 success (including empty results), 2 configuration error,
3 solver or fit non-convergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from . import analytics, export
from .qnm import ModeError, SearchOptions, default_band, find_modes, sample_field
from .resfit import FitError, S11Trace, batch_fit, fit_trace
from .structure import (
    DEFAULT_V0,
    CrystalRecipe,
    StructureError,
    build_empty_cavity,
    build_mirrored_crystal,
    load_structure_config,
    recipe_catalog,
)

import yaml

log = logging.getLogger("saw_qnm")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    catalog: str | None = None
    config: str | None = None
    band: tuple[float, float] | None = None
    output: str = "-"
    options: SearchOptions = field(default_factory=SearchOptions)
    threads: int = 1


# Recipe fields that a sweep may vary, keyed by their config-file names.
_SWEEP_FIELDS = {
    "n_total": ("n_total", int),
    "n_mirror": ("n_mirror", int),
    "center_strip_period_m": ("center_strip_period", float),
    "mirror_strip_period_m": ("mirror_strip_period", float),
    "metallization_ratio": ("metallization_ratio", float),
    "strip_reflectance": ("single_strip_reflectance", float),
    "v0_m_per_s": (None, float),
}


def parse_band(text: str | None) -> tuple[float, float] | None:
    if text is None:
        return None
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"band must look like LO:HI in hertz, got {text!r}") from None
    return lo, hi


def _recipe_source(cfg: RunConfig):
    """(recipe, v0, label) for catalog labels or recipe-based config files."""
    if cfg.catalog:
        for name, recipe in recipe_catalog():
            if name == cfg.catalog:
                return recipe, DEFAULT_V0, name
        raise ConfigError(f"unknown catalog label {cfg.catalog!r}")
    if cfg.config:
        data = yaml.safe_load(open(cfg.config, encoding="utf-8"))
        if not isinstance(data, dict) or "recipe" not in data or data.get("segments") is not None:
            raise ConfigError("sweeps need a recipe-based structure config")
        spec = load_structure_config(cfg.config)  # validates
        rec = data["recipe"]
        recipe = CrystalRecipe(
            n_total=rec["n_total"],
            n_mirror=rec.get("n_mirror", 0),
            center_strip_period=float(rec.get("center_strip_period_m", CrystalRecipe.center_strip_period)),
            mirror_strip_period=float(rec.get("mirror_strip_period_m", CrystalRecipe.mirror_strip_period)),
            metallization_ratio=float(data.get("metallization_ratio", CrystalRecipe.metallization_ratio)),
            single_strip_reflectance=float(data.get("strip_reflectance",
                                                    CrystalRecipe.single_strip_reflectance)),
        )
        return recipe, spec.v0, spec.label
    raise ConfigError("a structure source is required (--catalog or --config)")


def _structure(args, cfg: RunConfig):
    if getattr(args, "cavity_gap_m", None) is not None:
        return build_empty_cavity(args.cavity_gap_m, args.cavity_mirror, label="cavity")
    if cfg.config and not cfg.catalog:
        return load_structure_config(cfg.config)
    recipe, v0, label = _recipe_source(cfg)
    return build_mirrored_crystal(recipe, v0=v0, label=label)


def _solve(spec, cfg: RunConfig):
    band = cfg.band if cfg.band is not None else default_band(spec)
    return find_modes(spec, band, replace(cfg.options, workers=cfg.threads))


def run_solve(args, cfg: RunConfig) -> int:
    spec = _structure(args, cfg)
    modes = _solve(spec, cfg)
    export.write_text(cfg.output, export.modes_csv(modes, spec.label))
    export.write_sidecar(cfg.output, "solve")
    summary = sys.stderr if cfg.output == "-" else sys.stdout
    best = modes.best()
    if best is None:
        print(f"{spec.label or 'structure'}: no modes in band", file=summary)
    else:
        print(f"{spec.label or 'structure'}: {len(modes)} modes; top Q_r = {best.q_radiation:.6g} "
              f"at {best.frequency_hz:.9g} Hz", file=summary)
    return EXIT_OK


def run_field(args, cfg: RunConfig) -> int:
    spec = _structure(args, cfg)
    modes = _solve(spec, cfg)
    ranked = sorted(modes, key=lambda m: m.index_pair[0])
    if not 0 <= args.mode < len(ranked):
        raise ModeError(f"mode {args.mode} requested but {len(ranked)} modes were found")
    mode = ranked[args.mode]
    x, a = sample_field(spec, mode, args.samples_per_segment)
    export.write_text(cfg.output, export.field_csv(x, a))
    export.write_sidecar(cfg.output, "field")
    return EXIT_OK


def _sweep_values(name: str, text: str):
    if name not in _SWEEP_FIELDS:
        raise ConfigError(f"cannot vary {name!r}; choose from {sorted(_SWEEP_FIELDS)}")
    cast = _SWEEP_FIELDS[name][1]
    try:
        values = [cast(float(v)) if cast is int else cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"invalid value list {text!r}") from None
    if not values:
        raise ConfigError("empty value list")
    return values


def run_sweep(args, cfg: RunConfig) -> int:
    jobs = []
    if args.catalog_all:
        for name, recipe in recipe_catalog():
            jobs.append(("catalog", name, build_mirrored_crystal(recipe, label=name)))
    else:
        if not args.vary or not args.values:
            raise ConfigError("sweep needs --catalog-all or both --vary and --values")
        recipe, v0, label = _recipe_source(cfg)
        attr, _ = _SWEEP_FIELDS[args.vary] if args.vary in _SWEEP_FIELDS else (None, None)
        for value in _sweep_values(args.vary, args.values):
            if args.vary == "v0_m_per_s":
                spec = build_mirrored_crystal(recipe, v0=value, label=label)
            else:
                spec = build_mirrored_crystal(replace(recipe, **{attr: value}), v0=v0, label=label)
            jobs.append((args.vary, value, spec))

    single = replace(cfg, threads=1)

    def one(job):
        _, _, spec = job
        return _solve(spec, single)

    if cfg.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    rows = []
    for (param, value, spec), modes in zip(jobs, results):
        best = modes.best()
        rows.append((param, value, spec.label, None if best is None else best.q_radiation,
                     None if best is None else best.frequency_hz, len(modes)))
    export.write_text(cfg.output, export.sweep_csv(rows))
    export.write_sidecar(cfg.output, "sweep")
    return EXIT_OK


def run_analytics(args, cfg: RunConfig) -> int:
    geom = analytics.ResonatorGeometry(
        d_mirror_gap=args.d_mirror_gap_m,
        wavelength0=args.wavelength_m,
        r_s=args.rs,
        n_g=args.ng,
        aperture_w=args.aperture_m,
        gamma=args.gamma,
        f0=args.f0_hz,
        v=args.v_m_per_s,
        mean_free_path=args.mean_free_path_m,
    )
    inf = math.inf
    if args.mode == "crystal":
        qm = args.qm if args.qm is not None else analytics.q_material(geom)
        qr = args.qr if args.qr is not None else inf
        budget = analytics.LossBudget(q_radiation=qr, q_material=qm)
    else:
        budget = analytics.LossBudget(
            q_grating=args.qg if args.qg is not None else analytics.q_grating(geom).value,
            q_diffraction=args.qd if args.qd is not None else analytics.q_diffraction(geom),
            q_material=args.qm if args.qm is not None else analytics.q_material(geom),
            q_radiation=args.qr if args.qr is not None else inf,
        )
    out = budget.to_dict()
    if args.n_eff is not None:
        alpha, j_max = analytics.transverse_mode_limit(args.n_eff, args.strip_period_m, args.aperture_m)
        out["alpha_c_deg"] = alpha
        out["j_max"] = j_max
    export.write_text(cfg.output, export.dumps_json(out))
    return EXIT_OK


def run_fit(args, cfg: RunConfig) -> int:
    if args.manifest:
        traces = []
        for row in export.read_manifest(args.manifest):
            f, s = export.read_s11_csv(row["path"], polar=row["polar"] or args.polar)
            traces.append(S11Trace(f, s, power_dbm=row["power_dbm"], temperature_k=row["temperature_k"],
                                   label=row["label"]))
        rows = batch_fit(traces, workers=cfg.threads)
        export.write_text(cfg.output, export.dumps_json({"rows": [r.to_dict() for r in rows]}))
        export.write_sidecar(cfg.output, "fit")
        return EXIT_OK
    if not args.input:
        raise ConfigError("fit needs --input or --manifest")
    f, s = export.read_s11_csv(args.input, polar=args.polar)
    trace = S11Trace(f, s, label=args.label or "")
    model, report = fit_trace(trace)
    export.write_text(cfg.output, export.dumps_json({"model": model.to_dict(), "report": report.to_dict()}))
    export.write_sidecar(cfg.output, "fit")
    return EXIT_OK


def run_catalog(args, cfg: RunConfig) -> int:
    header = ("label", "n_total", "n_mirror", "center_strip_period_m", "mirror_strip_period_m",
              "metallization_ratio", "strip_reflectance")
    rows = [(name, r.n_total, r.n_mirror, r.center_strip_period, r.mirror_strip_period,
             r.metallization_ratio, r.single_strip_reflectance) for name, r in recipe_catalog()]
    export.write_text(cfg.output, export._rows_to_text(header, rows))
    return EXIT_OK


def _add_structure_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--catalog", help="catalog label R1..R9")
    src.add_argument("--config", help="structure file (YAML/JSON)")
    src.add_argument("--cavity-gap-m", type=float, help="empty cavity of this gap length between mirrors")
    p.add_argument("--cavity-mirror", type=int, default=250, help="strips per mirror for --cavity-gap-m")


def _add_solver_args(p):
    p.add_argument("--band", help="LO:HI search band in Hz")
    p.add_argument("--grid-points", type=float, default=8.0, help="grid points per free spectral range")
    p.add_argument("--refine-tol", type=float, default=1e-10)
    p.add_argument("--max-q-search", type=float, default=1e7)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saw-qnm", description=__doc__.split("\n\n")[0])
    parser.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="find QNMs and write the mode CSV")
    _add_structure_args(p)
    _add_solver_args(p)
    p.add_argument("--output", "-o", default="-")

    p = sub.add_parser("field", help="export the field profile of one mode")
    _add_structure_args(p)
    _add_solver_args(p)
    p.add_argument("--mode", type=int, default=0, help="rank by radiation Q (0 = highest)")
    p.add_argument("--samples-per-segment", type=int, default=8)
    p.add_argument("--output", "-o", default="-")

    p = sub.add_parser("sweep", help="best radiation Q across a recipe parameter")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--catalog", default=None, help="base recipe (default R9)")
    src.add_argument("--config", help="recipe-based structure file")
    p.add_argument("--catalog-all", action="store_true", help="solve all nine catalog structures")
    p.add_argument("--vary", help=f"recipe field: {', '.join(sorted(_SWEEP_FIELDS))}")
    p.add_argument("--values", help="comma-separated values")
    _add_solver_args(p)
    p.add_argument("--output", "-o", default="-")

    p = sub.add_parser("analytics", help="analytic loss budget as JSON")
    p.add_argument("--mode", choices=("crystal", "resonator"), default="crystal")
    p.add_argument("--qr", type=float, help="radiation Q (e.g. from solve)")
    p.add_argument("--qm", type=float, help="material Q override")
    p.add_argument("--qg", type=float, help="grating Q override")
    p.add_argument("--qd", type=float, help="diffraction Q override")
    p.add_argument("--d-mirror-gap-m", type=float, default=0.0)
    p.add_argument("--wavelength-m", type=float, default=0.96e-6)
    p.add_argument("--rs", type=float, default=0.015)
    p.add_argument("--ng", type=int, default=0)
    p.add_argument("--aperture-m", type=float, default=100 * 0.96e-6)
    p.add_argument("--gamma", type=float, default=0.378)
    p.add_argument("--f0-hz", type=float, default=3.1e9)
    p.add_argument("--v-m-per-s", type=float, default=DEFAULT_V0)
    p.add_argument("--mean-free-path-m", type=float, default=3.24e-2)
    p.add_argument("--n-eff", type=float, help="also report the critical angle and j_max")
    p.add_argument("--strip-period-m", type=float, default=0.475e-6)
    p.add_argument("--output", "-o", default="-")

    p = sub.add_parser("fit", help="fit S11 traces")
    p.add_argument("--input", help="CSV with frequency_hz,re_s11,im_s11")
    p.add_argument("--manifest", help="CSV with path[,power_dbm,temperature_k,label,polar]")
    p.add_argument("--polar", action="store_true", help="input columns are frequency_hz,mag_db,phase_deg")
    p.add_argument("--label")
    p.add_argument("--output", "-o", default="-")

    p = sub.add_parser("catalog", help="list the reference structures")
    p.add_argument("--output", "-o", default="-")
    return parser


_COMMANDS = {
    "solve": run_solve,
    "field": run_field,
    "sweep": run_sweep,
    "analytics": run_analytics,
    "fit": run_fit,
    "catalog": run_catalog,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = RunConfig(command=args.command, output=args.output, threads=args.threads,
                        catalog=getattr(args, "catalog", None), config=getattr(args, "config", None))
        if hasattr(args, "band"):
            cfg.band = parse_band(args.band)
            cfg.options = SearchOptions(grid_points=args.grid_points, refine_tol=args.refine_tol,
                                        max_q_search=args.max_q_search)
        if args.command == "sweep" and not cfg.catalog and not cfg.config:
            cfg.catalog = "R9"
        return _COMMANDS[args.command](args, cfg)
    except (ConfigError, StructureError, yaml.YAMLError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModeError, FitError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
