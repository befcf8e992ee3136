"""Width, scaling and shape exponents of a series of density snapshots."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import interpolate, optimize, stats

from .errors import AnalysisError, FitFailure, InputError
from .records import DensitySnapshot, ExponentFit
from .stable_law import StableParams, StableFit, stable_fit, standard_half_width

COLLAPSE_POINTS = 512
DEFAULT_ALPHA_RANGE = (0.8, 3.0)
DEFAULT_GRID_POINTS = 45


# ---------------------------------------------------------------------------
# FWHM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FwhmResult:
    width: float
    uncertainty: float
    flags: tuple[str, ...] = ()
    fit: StableFit | None = field(default=None, compare=False)


def half_max_width(x, y) -> float:
    """FWHM by linear interpolation of the two outermost half-maximum crossings around the peak."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    left = np.flatnonzero(y[:i] <= half)
    right = np.flatnonzero(y[i:] <= half)
    if left.size == 0 or right.size == 0:
        raise AnalysisError("curve does not fall below half maximum on both sides")
    l = left[-1]
    r = i + right[0]
    xl = x[l] + (half - y[l]) * (x[l + 1] - x[l]) / (y[l + 1] - y[l])
    xr = x[r - 1] + (half - y[r - 1]) * (x[r] - x[r - 1]) / (y[r] - y[r - 1])
    return float(xr - xl)


def extract_fwhm(curve: DensitySnapshot, exclusion: float | None = None) -> FwhmResult:
    """FWHM of the symmetric stable law fitted to ``curve`` (free amplitude).

    Falls back to direct half-maximum interpolation when the fit fails; the
    result is then flagged ``fallback_half_max``.
    """
    try:
        fit = stable_fit(curve, exclusion)
    except FitFailure:
        return FwhmResult(half_max_width(curve.x_grid, curve.density), math.nan, ("fallback_half_max",))
    p = fit.params
    hw = standard_half_width(p.alpha)
    width = 2.0 * p.scale * hw
    h = 1e-4
    a_lo, a_hi = max(p.alpha - h, 0.05), min(p.alpha + h, 2.0)
    dhw = (standard_half_width(a_hi) - standard_half_width(a_lo)) / (a_hi - a_lo)
    grad = np.array([2.0 * p.scale * dhw, 2.0 * hw])  # d/dalpha, d/dscale
    cov = fit.covariance[1:3, 1:3]
    var = float(grad @ cov @ grad)
    return FwhmResult(width, math.sqrt(var) if var >= 0 else math.nan, fit.flags, fit)


# ---------------------------------------------------------------------------
# dynamical exponent
# ---------------------------------------------------------------------------


def _log2_centered(values: np.ndarray) -> np.ndarray:
    """log2 of values relative to the first one, split so that scaling by 2**k is exact."""
    mant, expo = np.frexp(values)
    return np.log2(mant) + (expo - expo[0]).astype(float)


def fit_dynamical_exponent(series: Sequence[tuple[float, float]]) -> ExponentFit:
    """Power-law fit width ~ t**(1/alpha) by OLS in log-log space."""
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 4:
        raise InputError("need at least 4 (time, width) pairs")
    t, w = data[:, 0], data[:, 1]
    if np.any(~np.isfinite(data)) or np.any(t <= 0) or np.any(w <= 0):
        raise InputError("times and widths must be positive and finite")
    lx = _log2_centered(t)
    ly = _log2_centered(w)
    xc = lx - lx.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise InputError("times have zero variance")
    slope = float(xc @ (ly - ly.mean())) / sxx
    resid = ly - ly.mean() - slope * xc
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    n = t.size
    se = math.sqrt(ss_res / (n - 2) / sxx)
    half_slope = stats.t.ppf(0.975, n - 2) * se
    if slope <= 0:
        raise AnalysisError(f"width does not grow with time (slope {slope:.3g})")
    exponent = 1.0 / slope
    return ExponentFit(exponent=exponent, ci95=half_slope / slope**2, r_squared=r2,
                       method="fwhm_power_law", details={"slope": slope, "slope_ci95": half_slope})


def widths_of(snapshots: Sequence[DensitySnapshot], exclusion: float | None = None) -> list[FwhmResult]:
    return [extract_fwhm(s, exclusion) for s in snapshots]


def dynamical_exponent_of(snapshots, exclusion=None) -> ExponentFit:
    widths = widths_of(snapshots, exclusion)
    fit = fit_dynamical_exponent([(s.time, w.width) for s, w in zip(snapshots, widths)])
    flags = sorted({f for w in widths for f in w.flags})
    return ExponentFit(fit.exponent, fit.ci95, fit.r_squared, fit.method, tuple(flags),
                       dict(fit.details, widths=[w.width for w in widths]))


# ---------------------------------------------------------------------------
# self-similarity
# ---------------------------------------------------------------------------


def _interpolator(x, y):
    """Monotone cubic in log-density where both neighbours are positive, linear elsewhere."""
    pos = y > 0
    pchip = interpolate.PchipInterpolator(x[pos], np.log(y[pos])) if pos.sum() >= 2 else None

    def f(q):
        out = np.interp(q, x, y)
        if pchip is None:
            return out
        j = np.clip(np.searchsorted(x, q) - 1, 0, x.size - 2)
        both = pos[j] & pos[j + 1]
        if np.any(both):
            out[both] = np.exp(pchip(q[both]))
        return out

    return f


def rescaled_curves(snapshots: Sequence[DensitySnapshot], alpha: float, n_points: int = COLLAPSE_POINTS):
    """Common grid and the curves t**(1/alpha) W(x t**(1/alpha), t) sampled on it."""
    if len(snapshots) < 2:
        raise InputError("need at least two snapshots")
    if alpha <= 0:
        raise InputError("alpha must be positive")
    factors = []
    for s in snapshots:
        if s.time <= 0:
            raise InputError("snapshot times must be positive")
        factors.append(s.time ** (1.0 / alpha))
    lo = [s.x_grid[0] / f for s, f in zip(snapshots, factors)]
    hi = [s.x_grid[-1] / f for s, f in zip(snapshots, factors)]
    a, b = max(lo), min(hi)
    if not b > a:
        i, j = int(np.argmax(lo)), int(np.argmin(hi))
        raise AnalysisError(f"rescaled supports of snapshots {i} (t={snapshots[i].time}) and "
                            f"{j} (t={snapshots[j].time}) do not overlap at alpha={alpha}")
    grid = np.linspace(a, b, n_points)
    curves = np.array([f * _interpolator(s.x_grid, s.density)(grid * f)
                       for s, f in zip(snapshots, factors)])
    return grid, curves


def _measure(grid, curves) -> float:
    mean = curves.mean(axis=0)
    denom = np.trapezoid(mean, grid)
    if denom <= 0:
        raise AnalysisError("mean rescaled curve has zero mass on the common grid")
    return float(sum(np.trapezoid(np.abs(c - mean), grid) for c in curves) / denom)


def self_similarity_measure(snapshots: Sequence[DensitySnapshot], alpha: float) -> float:
    """Sum over snapshots of the L1 distance of each rescaled curve from their mean, over the mean's mass."""
    return _measure(*rescaled_curves(snapshots, alpha))


@dataclass(frozen=True, eq=False)
class CollapseResult:
    alpha_grid: np.ndarray
    m_values: np.ndarray
    alpha_star: float
    collapsed_curves: np.ndarray
    collapse_grid: np.ndarray
    warnings: tuple[str, ...] = ()

    @property
    def m_star(self) -> float:
        return float(self.m_values[np.searchsorted(self.alpha_grid, self.alpha_star)])

    def interior_local_minima(self) -> int:
        m = self.m_values
        return int(np.sum((m[1:-1] < m[:-2]) & (m[1:-1] < m[2:])))


def find_alpha_star(snapshots, alpha_range=DEFAULT_ALPHA_RANGE, grid_points=DEFAULT_GRID_POINTS,
                    tol=1e-3) -> CollapseResult:
    """Grid scan of the self-similarity measure, refined by golden-section search."""
    a_lo, a_hi = alpha_range
    if not (0.5 < a_lo < a_hi < 4.0):
        raise InputError("alpha_range must lie within (0.5, 4)")
    if grid_points < 20:
        raise InputError("grid_points must be at least 20")
    grid = np.linspace(a_lo, a_hi, grid_points)
    m = np.array([self_similarity_measure(snapshots, a) for a in grid])
    j = int(np.argmin(m))
    notes = []
    if j == 0 or j == grid.size - 1:
        notes.append(f"minimum on range boundary at alpha={grid[j]:.4g}")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
        best, m_best = grid[j], m[j]
    else:
        res = optimize.minimize_scalar(lambda a: self_similarity_measure(snapshots, a),
                                       bracket=(grid[j - 1], grid[j], grid[j + 1]), method="golden",
                                       options={"xtol": tol / grid[j]})
        best, m_best = float(res.x), float(res.fun)
        if m_best > m[j]:
            best, m_best = grid[j], m[j]
    if best not in grid:
        k = int(np.searchsorted(grid, best))
        grid = np.insert(grid, k, best)
        m = np.insert(m, k, m_best)
    cgrid, curves = rescaled_curves(snapshots, best)
    return CollapseResult(alpha_grid=grid, m_values=m, alpha_star=float(best), collapsed_curves=curves,
                          collapse_grid=cgrid, warnings=tuple(notes))


# ---------------------------------------------------------------------------
# shape exponent
# ---------------------------------------------------------------------------


def shape_fit(snapshot: DensitySnapshot, exclusion: float | None = None) -> ExponentFit:
    try:
        fit = stable_fit(snapshot, exclusion)
    except FitFailure as exc:
        best = exc.best
        alpha = float(best[1]) if best is not None else math.nan
        return ExponentFit(alpha, 0.0, 0.0, "levy_shape", ("fit_failed",))
    return ExponentFit(fit.params.alpha, fit.alpha_ci95, fit.r_squared, "levy_shape", fit.flags,
                       {"scale": fit.params.scale, "location": fit.params.location,
                        "amplitude": fit.amplitude})


def fit_shape_exponent(snapshots: Sequence[DensitySnapshot], exclusion: float | None = None
                       ) -> list[tuple[float, ExponentFit]]:
    if len(snapshots) < 1:
        raise InputError("need at least one snapshot")
    return [(s.time, shape_fit(s, exclusion)) for s in snapshots]


def shape_asymptote(series: Sequence[tuple[float, ExponentFit]]) -> float:
    """Mean shape exponent over the final third of the time series."""
    values = [f.exponent for _, f in series if "fit_failed" not in f.flags]
    if not values:
        raise AnalysisError("no successful shape fits")
    k = max(1, int(math.ceil(len(values) / 3)))
    return float(np.mean(values[-k:]))
