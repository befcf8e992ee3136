"""Shared value types: density snapshots and exponent fits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InputError

#: Relative tolerance on grid-spacing uniformity.
GRID_RTOL = 1e-6

FIT_METHODS = ("fwhm_power_law", "self_similarity", "levy_shape", "tail")


@dataclass(frozen=True, eq=False)
class DensitySnapshot:
    """Spatial density W(x, t) on a uniform grid.

    ``x_grid`` in micrometres, ``density`` in 1/micrometre, ``time`` in ms.
    Producers (simulators, ingest) normalize to unit trapezoidal integral; the
    constructor itself only enforces grid uniformity and non-negativity so that
    raw curves can be represented before normalization.
    """

    time: float
    x_grid: np.ndarray
    density: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        w = np.asarray(self.density, dtype=float)
        if x.ndim != 1 or w.shape != x.shape:
            raise InputError("x_grid and density must be 1-D arrays of equal length")
        if x.size < 2:
            raise InputError("a snapshot needs at least two grid points")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise InputError("snapshot contains non-finite values")
        dx = np.diff(x)
        if np.any(dx <= 0):
            raise InputError("x_grid must be strictly increasing")
        if np.max(np.abs(dx - dx.mean())) > GRID_RTOL * dx.mean():
            raise InputError("x_grid spacing is not uniform")
        if np.any(w < 0):
            raise InputError("density has negative values")
        if not np.isfinite(self.time):
            raise InputError("time must be finite")
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "density", w)
        object.__setattr__(self, "time", float(self.time))

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    @property
    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.x_grid))

    def normalized(self) -> DensitySnapshot:
        total = self.integral
        if total <= 0:
            raise InputError("cannot normalize a curve with zero integral")
        return DensitySnapshot(self.time, self.x_grid, self.density / total, dict(self.meta))

    def mean_position(self) -> float:
        return float(np.trapezoid(self.x_grid * self.density, self.x_grid) / self.integral)


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    ci95: float
    r_squared: float
    method: str
    flags: tuple[str, ...] = ()
    details: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in FIT_METHODS:
            raise InputError(f"unknown fit method {self.method!r}")
        if not self.ci95 >= 0:
            raise InputError("ci95 must be non-negative")
        r2 = min(max(float(self.r_squared), 0.0), 1.0)
        object.__setattr__(self, "r_squared", r2)

    def to_record(self) -> dict[str, Any]:
        return {
            "exponent": float(self.exponent),
            "ci95": float(self.ci95),
            "r_squared": float(self.r_squared),
            "method": self.method,
            "flags": list(self.flags),
        }


def histogram_snapshot(positions, time, *, n_bins=512, span_fraction=0.999, span_iqr=25.0,
                       meta=None):
    """Histogram positions onto a uniform grid.

    The grid spans the central ``span_fraction`` of the positions, clipped to
    ``median +- span_iqr * IQR`` so that heavy tails do not starve the core of
    resolution (``span_iqr=None`` disables the clip).  The result is normalized
    to unit trapezoidal integral over the bin centres.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.size == 0:
        raise InputError("no positions to histogram")
    if n_bins < 64:
        raise InputError("at least 64 bins are required")
    tail = (1.0 - span_fraction) / 2.0
    lo, q1, med, q3, hi = np.quantile(positions, [tail, 0.25, 0.5, 0.75, 1.0 - tail])
    if span_iqr is not None and q3 > q1:
        lo = max(lo, med - span_iqr * (q3 - q1))
        hi = min(hi, med + span_iqr * (q3 - q1))
    if not hi > lo:
        # degenerate (all atoms frozen at one point): widen symmetrically
        half = max(abs(lo), 1.0) * 1e-6
        lo, hi = lo - half, hi + half
    counts, edges = np.histogram(positions, bins=n_bins, range=(lo, hi))
    centres = 0.5 * (edges[:-1] + edges[1:])
    dx = edges[1] - edges[0]
    density = counts / dx
    total = np.trapezoid(density, centres)
    if total <= 0:
        raise InputError("all positions fell outside the histogram range")
    info = {"binned": True, "bin_width": float(dx), "n_samples": int(positions.size),
            "in_range_fraction": float(counts.sum() / positions.size)}
    info.update(meta or {})
    return DensitySnapshot(time, centres, density / total, info)
