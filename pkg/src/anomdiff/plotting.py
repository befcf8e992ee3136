"""Deterministic SVG figures for widths, exponents, collapse and shape series."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import InputError  # noqa: E402

_RC = {"svg.hashsalt": "anomdiff", "svg.fonttype": "none", "font.size": 9, "figure.dpi": 100}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def _require(cond: bool, what: str) -> None:
    if not cond:
        raise InputError(f"nothing to plot: {what}")


def plot_fwhm(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], path) -> Path:
    """FWHM^2 against t^2 on log axes, one line per label.

    ``series`` maps a label to (times_ms, fwhm_um).  Curves are shifted to
    pass through a common point at the first time so that slopes compare
    directly.
    """
    _require(bool(series) and all(len(t) for t, _ in series.values()), "empty FWHM series")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        for label, (t, w) in series.items():
            t = np.asarray(t, float)
            w2 = np.asarray(w, float) ** 2
            ax.loglog(t**2, w2 / w2[0], "o-", ms=3, label=str(label))
        ax.set_xlabel("t$^2$ (ms$^2$)")
        ax.set_ylabel("FWHM$^2$ (shifted)")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_exponents(parameter: Sequence[float], columns: Mapping[str, Sequence[float]], path, *,
                   errors: Mapping[str, Sequence[float]] | None = None,
                   xlabel: str = "lattice depth (E$_r$)") -> Path:
    """Several exponent estimates against a swept parameter."""
    _require(len(parameter) > 0 and bool(columns), "empty exponent table")
    errors = errors or {}
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        markers = "osd^v"
        for i, (label, values) in enumerate(columns.items()):
            err = errors.get(label)
            ax.errorbar(parameter, values, yerr=err, marker=markers[i % len(markers)], ms=4,
                        capsize=2, lw=1, label=label)
        ax.axhline(2.0, color="0.6", lw=0.8, ls="--")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("exponent")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_collapse(alpha_grid, m_values, alpha_star, collapse_grid, collapsed_curves, path) -> Path:
    """m(alpha) with its minimum marked; inset overlays the rescaled curves at alpha*."""
    _require(len(alpha_grid) > 0 and len(collapsed_curves) > 0, "empty collapse result")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.plot(alpha_grid, m_values, "k.-", ms=3)
        ax.axvline(alpha_star, color="C3", lw=0.8)
        ax.set_yscale("log")
        ax.set_xlabel(r"$\alpha$")
        ax.set_ylabel(r"m($\alpha$)")
        inset = ax.inset_axes([0.55, 0.55, 0.4, 0.4])
        for curve in collapsed_curves:
            inset.plot(collapse_grid, curve, lw=0.6)
        inset.set_title(rf"$\alpha^*$ = {alpha_star:.3f}", fontsize=7)
        inset.tick_params(labelsize=6)
        fig.tight_layout()
        return _save(fig, path)


def plot_shape(times, exponents, errors, path, *, x=None, density=None, fitted=None) -> Path:
    """Shape exponent against time; optional inset with a snapshot and its fit."""
    _require(len(times) > 0, "empty shape series")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.errorbar(times, exponents, yerr=errors, fmt="o", ms=4, capsize=2)
        ax.set_xlabel("t (ms)")
        ax.set_ylabel("shape exponent")
        if x is not None and density is not None:
            inset = ax.inset_axes([0.55, 0.12, 0.4, 0.4])
            inset.semilogy(x, density, ".", ms=1.5, color="0.4")
            if fitted is not None:
                inset.semilogy(x, fitted, "-", lw=0.8, color="C3")
            inset.tick_params(labelsize=6)
        fig.tight_layout()
        return _save(fig, path)
