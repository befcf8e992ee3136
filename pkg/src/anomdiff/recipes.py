"""Named figure-reproduction pipelines: simulate or ingest, analyze, write reports and plots."""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from . import io, plotting
from .analysis import (dynamical_exponent_of, find_alpha_star, fit_shape_exponent, shape_asymptote,
                       widths_of)
from .ctrw import simulate_walk
from .errors import ConfigError, ParameterDomainError
from .lattice.mcwf import simulate_mcwf
from .lattice.semiclassical import simulate_semiclassical
from .records import DensitySnapshot
from .stable_law import StableParams, stable_pdf


def _section_name(simulator: str) -> str:
    return "ctrw_walker" if simulator == "ctrw" else "sisyphus_lattice"


def sweep_points(config: io.Config) -> list[dict]:
    """Per-point overrides; a recipe without a sweep has one point with none."""
    if config.recipe.simulator == "ingest":
        return [{}]
    return list(config.recipe.sweep) or [{}]


def point_config(config: io.Config, overrides: dict):
    name = _section_name(config.recipe.simulator)
    base = getattr(config, name)
    values = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    for key in overrides:
        if key not in values:
            raise ConfigError("unknown sweep key", f"recipe.sweep.{key}")
    values.update(overrides)
    if name == "ctrw_walker" and "correlation" in overrides:
        values = io._coerce_ctrw(values, "recipe.sweep")
    try:
        return type(base)(**values)
    except (ParameterDomainError, TypeError) as exc:
        raise ConfigError(str(exc), "recipe.sweep") from exc


def produce_snapshots(config: io.Config, overrides: dict, workers: int) -> list[DensitySnapshot]:
    sim = config.recipe.simulator
    seed = config.run.seed
    if sim == "ingest":
        ing = config.ingest
        files = list(ing.files) or (io.bundled_dataset(ing.bundled) if ing.bundled else [])
        return io.ingest(files, ing.metadata, baseline_fraction=ing.baseline_fraction,
                         negative_tolerance=ing.negative_tolerance)
    cfg = point_config(config, overrides)
    if sim == "ctrw":
        return simulate_walk(cfg, seed, workers)
    if sim == "semiclassical":
        return simulate_semiclassical(cfg, seed, workers)
    return simulate_mcwf(cfg, config.grid, seed, workers)


def _axis(points: list[dict]) -> tuple[list[float], str]:
    keys = [k for k in (points[0] if points else {}) if isinstance(points[0][k], (int, float))]
    if keys and all(keys[0] in p for p in points):
        return [float(p[keys[0]]) for p in points], keys[0]
    return [float(i) for i in range(len(points))], "sweep point"


def _label(i: int) -> str:
    return f"point_{i:02d}"


def _fwhm(snaps, analysis) -> dict:
    widths = widths_of(snaps, analysis.exclusion)
    return {"times_ms": [s.time for s in snaps], "fwhm_um": [w.width for w in widths],
            "uncertainty_um": [w.uncertainty for w in widths], "flags": [list(w.flags) for w in widths]}


def _fig2(results, points, config, out: Path) -> None:
    rows, series = [], {}
    for i, (snaps, digests) in enumerate(results):
        row = {"label": _label(i), "overrides": points[i], "input_digests": digests}
        row.update(_fwhm(snaps, config.anomalous_analysis))
        rows.append(row)
        series[_label(i) if not points[i] else ", ".join(f"{k}={v}" for k, v in points[i].items())] = (
            row["times_ms"], row["fwhm_um"])
    io.write_json(out / "reports" / "fwhm.json", {"recipe": "fig2_fwhm", "points": rows})
    plotting.plot_fwhm(series, out / "plots" / "fig2_fwhm.svg")


def _fig3(results, points, config, out: Path) -> None:
    an = config.anomalous_analysis
    rows = []
    for i, (snaps, digests) in enumerate(results):
        dyn = dynamical_exponent_of(snaps, an.exclusion)
        collapse = find_alpha_star(snaps, an.alpha_range, an.grid_points)
        shape = fit_shape_exponent(snaps, an.exclusion)
        asym = shape_asymptote(shape)
        rows.append({"label": _label(i), "overrides": points[i],
                     "dynamical": io.fit_record(dyn, digests),
                     "self_similarity": {"exponent": collapse.alpha_star, "m_star": collapse.m_star,
                                         "warnings": list(collapse.warnings), "method": "self_similarity",
                                         "input_digests": digests},
                     "shape": {"exponent": asym, "method": "levy_shape_final_third",
                               "series": [{"time_ms": t, **f.to_record()} for t, f in shape],
                               "input_digests": digests}})
    io.write_json(out / "reports" / "exponents.json", {"recipe": "fig3_exponents", "points": rows})
    x, xlabel = _axis(points)
    plotting.plot_exponents(
        x, {"dynamical": [r["dynamical"]["exponent"] for r in rows],
            "self-similarity": [r["self_similarity"]["exponent"] for r in rows],
            "shape": [r["shape"]["exponent"] for r in rows]},
        out / "plots" / "fig3_exponents.svg",
        errors={"dynamical": [r["dynamical"]["ci95"] for r in rows]}, xlabel=xlabel)


def _fig4(results, points, config, out: Path) -> None:
    an = config.anomalous_analysis
    rows = []
    for i, (snaps, digests) in enumerate(results):
        res = find_alpha_star(snaps, an.alpha_range, an.grid_points)
        curve = out / "reports" / f"m_curve_{_label(i)}.txt"
        curve.parent.mkdir(parents=True, exist_ok=True)
        curve.write_text("# alpha m\n" + "".join(f"{a!r} {m!r}\n" for a, m in
                                                  zip(res.alpha_grid.tolist(), res.m_values.tolist())))
        rows.append({"label": _label(i), "overrides": points[i], "alpha_star": res.alpha_star,
                     "m_star": res.m_star, "interior_local_minima": res.interior_local_minima(),
                     "warnings": list(res.warnings), "input_digests": digests})
        plotting.plot_collapse(res.alpha_grid, res.m_values, res.alpha_star, res.collapse_grid,
                               res.collapsed_curves, out / "plots" / f"fig4_collapse_{_label(i)}.svg")
    io.write_json(out / "reports" / "collapse.json", {"recipe": "fig4_collapse", "points": rows})


def _fig5(results, points, config, out: Path) -> None:
    an = config.anomalous_analysis
    rows = []
    for i, (snaps, digests) in enumerate(results):
        series = fit_shape_exponent(snaps, an.exclusion)
        asym = shape_asymptote(series)
        rows.append({"label": _label(i), "overrides": points[i], "asymptote": asym,
                     "series": [{"time_ms": t, **f.to_record()} for t, f in series],
                     "input_digests": digests})
        last, fit = snaps[-1], series[-1][1]
        fitted = None
        if "fit_failed" not in fit.flags:
            params = StableParams(fit.exponent, fit.details["scale"], fit.details["location"])
            fitted = fit.details["amplitude"] * stable_pdf(params, last.x_grid)
        plotting.plot_shape([t for t, _ in series], [f.exponent for _, f in series],
                            [f.ci95 for _, f in series], out / "plots" / f"fig5_shape_{_label(i)}.svg",
                            x=last.x_grid, density=np.maximum(last.density, 1e-300), fitted=fitted)
    io.write_json(out / "reports" / "shape.json", {"recipe": "fig5_shape", "points": rows})


_STAGES = {"fig2_fwhm": _fig2, "fig3_exponents": _fig3, "fig4_collapse": _fig4, "fig5_shape": _fig5}


def run_recipe(config: io.Config, out: Path, workers: int = 1) -> None:
    """Write snapshots, reports and plots for ``config.recipe`` under ``out``.

    Output bytes depend only on the configuration and seed, not on ``workers``.
    """
    out = Path(out)
    points = sweep_points(config)
    results = []
    for i, overrides in enumerate(points):
        snaps = produce_snapshots(config, overrides, workers)
        io.write_series(out / "snapshots" / _label(i), snaps)
        results.append((snaps, [io.snapshot_digest(s) for s in snaps]))
    _STAGES[config.recipe.name](results, points, config, out)


def generate_bundled_stable(directory, alpha: float = 1.25) -> list[Path]:
    """Write the stable-kernel series shipped with the package (used by fig4_collapse)."""
    from .synthetic import stable_kernel_series

    return io.write_series(directory, stable_kernel_series(alpha, half_extent=60.0))
