"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data-quality or input error,
4 numeric failure (quadrature, fit or integrator), 1 anything else.
Outputs are staged in a hidden directory and moved into place only on
success, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
import tempfile
from pathlib import Path

from . import __version__, io, plotting, recipes
from .analysis import (dynamical_exponent_of, find_alpha_star, fit_shape_exponent, shape_asymptote,
                       widths_of)
from .ctrw import simulate_walk
from .errors import AnomdiffError, ConfigError, InputError
from .lattice.mcwf import simulate_mcwf
from .lattice.semiclassical import simulate_semiclassical

log = logging.getLogger("anomdiff")


def _config(args) -> io.Config:
    cfg = io.load_config(args.config) if getattr(args, "config", None) else io.Config()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, **overrides))
    if getattr(args, "recipe", None):
        try:
            cfg = dataclasses.replace(cfg, recipe=dataclasses.replace(cfg.recipe, name=args.recipe))
        except AnomdiffError as exc:
            raise ConfigError(str(exc), "recipe.name") from exc
    if cfg.run.workers < 1:
        raise ConfigError("must be at least 1", "run.workers")
    return cfg


def _out_dir(args, command: str, cfg: io.Config) -> Path:
    if args.out:
        return Path(args.out)
    return io.output_root() / f"{command}-{cfg.digest()[:12]}-seed{cfg.run.seed}"


def _staged(out: Path, cfg: io.Config, body) -> Path:
    """Run ``body(staging_dir)``; on success replace ``out`` with the staged tree plus a manifest."""
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    manifest = io.RunManifest(config_digest=cfg.digest(), seed=cfg.run.seed, started=io.now_utc())
    try:
        body(stage)
        manifest.finished = io.now_utc()
        manifest.collect(stage)
        manifest.write(stage)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    stage.rename(out)
    return out


def cmd_simulate_ctrw(args) -> Path:
    cfg = _config(args)

    def body(stage):
        io.write_series(stage / "snapshots", simulate_walk(cfg.ctrw_walker, cfg.run.seed, cfg.run.workers))

    return _staged(_out_dir(args, "ctrw", cfg), cfg, body)


def cmd_simulate_lattice(args) -> Path:
    cfg = _config(args)

    def body(stage):
        if args.model == "mcwf":
            snaps = simulate_mcwf(cfg.sisyphus_lattice, cfg.grid, cfg.run.seed, cfg.run.workers)
        else:
            snaps = simulate_semiclassical(cfg.sisyphus_lattice, cfg.run.seed, cfg.run.workers)
        io.write_series(stage / "snapshots", snaps)

    return _staged(_out_dir(args, f"lattice-{args.model}", cfg), cfg, body)


def _inputs(paths) -> list:
    snaps = []
    for p in paths:
        p = Path(p)
        snaps.extend(io.read_series(p) if p.is_dir() else [io.read_snapshot(p)])
    if not snaps:
        raise InputError("no snapshots given")
    snaps.sort(key=lambda s: s.time)
    return snaps


def cmd_analyze(args) -> Path:
    cfg = _config(args)
    snaps = _inputs(args.inputs)
    an = cfg.anomalous_analysis

    def body(stage):
        digests = [io.snapshot_digest(s) for s in snaps]
        widths = widths_of(snaps, an.exclusion)
        dyn = dynamical_exponent_of(snaps, an.exclusion)
        shape = fit_shape_exponent(snaps, an.exclusion)
        io.write_json(stage / "analysis.json", {
            "fwhm": [{"time_ms": s.time, "fwhm_um": w.width, "uncertainty_um": w.uncertainty,
                      "flags": list(w.flags)} for s, w in zip(snaps, widths)],
            "dynamical": io.fit_record(dyn, digests),
            "shape": {"asymptote": shape_asymptote(shape),
                      "series": [{"time_ms": t, **f.to_record()} for t, f in shape]},
        })

    return _staged(_out_dir(args, "analyze", cfg), cfg, body)


def cmd_collapse(args) -> Path:
    cfg = _config(args)
    snaps = _inputs(args.inputs)
    an = cfg.anomalous_analysis

    def body(stage):
        res = find_alpha_star(snaps, an.alpha_range, an.grid_points)
        (stage / "m_curve.txt").write_text("# alpha m\n" + "".join(
            f"{a!r} {m!r}\n" for a, m in zip(res.alpha_grid.tolist(), res.m_values.tolist())))
        io.write_json(stage / "collapse.json", {
            "alpha_star": res.alpha_star, "m_star": res.m_star, "warnings": list(res.warnings),
            "interior_local_minima": res.interior_local_minima(),
            "input_digests": [io.snapshot_digest(s) for s in snaps]})
        plotting.plot_collapse(res.alpha_grid, res.m_values, res.alpha_star, res.collapse_grid,
                               res.collapsed_curves, stage / "collapse.svg")

    return _staged(_out_dir(args, "collapse", cfg), cfg, body)


def cmd_ingest(args) -> Path:
    cfg = _config(args)
    ing = cfg.ingest
    files = list(args.files) or list(ing.files) or (io.bundled_dataset(ing.bundled) if ing.bundled else [])
    snaps = io.ingest(files, ing.metadata, baseline_fraction=ing.baseline_fraction,
                      negative_tolerance=ing.negative_tolerance)
    return _staged(_out_dir(args, "ingest", cfg), cfg,
                   lambda stage: io.write_series(stage / "snapshots", snaps))


def cmd_plot(args) -> Path:
    cfg = _config(args)
    report = io.read_json(args.report)
    out = _out_dir(args, "plot", cfg)

    def body(stage):
        points = report.get("points")
        kind = report.get("recipe")
        if kind == "fig2_fwhm":
            plotting.plot_fwhm({p["label"]: (p["times_ms"], p["fwhm_um"]) for p in points},
                               stage / "fig2_fwhm.svg")
        elif kind == "fig3_exponents":
            plotting.plot_exponents(list(range(len(points))),
                                    {k: [p[k]["exponent"] for p in points]
                                     for k in ("dynamical", "self_similarity", "shape")},
                                    stage / "fig3_exponents.svg", xlabel="sweep point")
        elif kind == "fig5_shape":
            for p in points:
                s = p["series"]
                plotting.plot_shape([r["time_ms"] for r in s], [r["exponent"] for r in s],
                                    [r["ci95"] for r in s], stage / f"fig5_shape_{p['label']}.svg")
        elif "dynamical" in report and "fwhm" in report:
            plotting.plot_fwhm({"series": ([r["time_ms"] for r in report["fwhm"]],
                                           [r["fwhm_um"] for r in report["fwhm"]])}, stage / "fwhm.svg")
        else:
            raise InputError(f"{args.report}: not a plottable report")

    return _staged(out, cfg, body)


def cmd_run_recipe(args) -> Path:
    cfg = _config(args)
    out = _out_dir(args, cfg.recipe.name, cfg)
    return _staged(out, cfg, lambda stage: recipes.run_recipe(cfg, stage, cfg.run.workers))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anomdiff", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"anomdiff {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--out", help=f"output directory (default under ${io.OUTPUT_ROOT_ENV})")
    common.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    common.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-ctrw", parents=[common], help="continuous-time random walk snapshots")
    p.set_defaults(func=cmd_simulate_ctrw)
    p = sub.add_parser("simulate-lattice", parents=[common], help="Sisyphus lattice snapshots")
    p.add_argument("--model", choices=("semiclassical", "mcwf"), default="semiclassical")
    p.set_defaults(func=cmd_simulate_lattice)
    p = sub.add_parser("analyze", parents=[common], help="FWHM, dynamical and shape exponents")
    p.add_argument("inputs", nargs="+", help="snapshot files or directories")
    p.set_defaults(func=cmd_analyze)
    p = sub.add_parser("collapse", parents=[common], help="self-similarity exponent alpha*")
    p.add_argument("inputs", nargs="+", help="snapshot files or directories")
    p.set_defaults(func=cmd_collapse)
    p = sub.add_parser("ingest", parents=[common], help="validate and normalize external density files")
    p.add_argument("files", nargs="*")
    p.set_defaults(func=cmd_ingest)
    p = sub.add_parser("plot", parents=[common], help="render a JSON report as SVG")
    p.add_argument("report")
    p.set_defaults(func=cmd_plot)
    p = sub.add_parser("run-recipe", parents=[common], help="run a named figure pipeline")
    p.add_argument("--recipe", choices=io.RECIPE_NAMES, help="overrides recipe.name in the config")
    p.set_defaults(func=cmd_run_recipe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        out = args.func(args)
    except AnomdiffError as exc:
        print(f"anomdiff: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
