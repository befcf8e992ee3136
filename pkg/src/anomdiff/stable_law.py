"""Symmetric and one-sided alpha-stable laws: density, sampling, fitting.

Conventions
-----------
Symmetric law: characteristic function ``exp(i k delta - |gamma k|**alpha)``.
At alpha=2 this is a Gaussian of variance ``2 gamma**2``; at alpha=1 a Cauchy
law of scale ``gamma``.

One-sided law: the positive stable subordinator with Laplace transform
``exp(-(gamma s)**alpha)``, shifted by ``delta``.  At alpha=1/2 and gamma=1 its
density is ``x**-1.5 exp(-1/(4x)) / (2 sqrt(pi))``, i.e. half the
Levy-Smirnov variable with unit scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate, optimize, special

from .errors import FitFailure, InputError, NumericAccuracyError, ParameterDomainError
from .records import DensitySnapshot, ExponentFit

SYMMETRIC = "symmetric"
ONE_SIDED = "one_sided"

#: |x - delta| / gamma beyond which the Bergstrom series replaces quadrature.
SERIES_SWITCH = 10.0
#: exp(-k**alpha) is below 3e-20 past this point, so the transform is truncated there.
_CUTOFF_EXPONENT = 45.0
_PDF_ABS_TOL = 1e-13
_SERIES_TERMS = 400


@dataclass(frozen=True)
class StableParams:
    alpha: float
    scale: float = 1.0
    location: float = 0.0
    sided: str = SYMMETRIC

    def __post_init__(self):
        a = float(self.alpha)
        if self.sided == SYMMETRIC:
            if not 0.0 < a <= 2.0:
                raise ParameterDomainError(f"symmetric alpha must lie in (0, 2], got {a}")
        elif self.sided == ONE_SIDED:
            if not 0.0 < a < 1.0:
                raise ParameterDomainError(f"one-sided alpha must lie in (0, 1), got {a}")
        else:
            raise ParameterDomainError(f"unknown sidedness {self.sided!r}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ParameterDomainError(f"scale must be positive and finite, got {self.scale}")
        if not math.isfinite(self.location):
            raise ParameterDomainError("location must be finite")


@dataclass(frozen=True, eq=False)
class SampleBatch:
    values: np.ndarray
    seed: int
    count: int
    params: StableParams | None = None


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------


def _series_terms(u, alpha, nmax=_SERIES_TERMS):
    """Individual Bergstrom terms for the standard symmetric density at |u| > 0."""
    u = np.abs(np.asarray(u, dtype=float))[..., None]
    n = np.arange(1, nmax + 1, dtype=float)
    logmag = special.gammaln(n * alpha + 1) - special.gammaln(n + 1) - (n * alpha + 1) * np.log(u)
    sign = np.where(n % 2 == 1, 1.0, -1.0) * np.sin(n * np.pi * alpha / 2)
    return sign * np.exp(logmag), np.exp(logmag)


def _series_pdf(u, alpha):
    """Large-|u| expansion of the standard density and an error estimate.

    Convergent for alpha < 1; asymptotic for alpha > 1, where it is truncated
    at the smallest term.
    """
    terms, mags = _series_terms(u, alpha)
    if alpha < 1:
        value = terms.sum(axis=-1)
        err = mags[..., -1] + 1e-16 * mags.max(axis=-1)
    else:
        stop = np.argmin(mags, axis=-1)
        keep = np.arange(mags.shape[-1]) < stop[..., None]
        value = np.where(keep, terms, 0.0).sum(axis=-1)
        err = np.take_along_axis(mags, stop[..., None], axis=-1)[..., 0]
        if alpha > 1.8:
            # Gaussian-type remainder that the expansion cannot see.
            err = err + np.exp(-np.abs(np.asarray(u)) ** 2 / 4) / (2 * np.sqrt(np.pi))
    return value / np.pi, err / np.pi


def _quad_pdf(u, alpha):
    """Adaptive quadrature of (1/pi) int_0^K cos(k u) exp(-k**alpha) dk."""
    u = abs(float(u))
    cutoff = _CUTOFF_EXPONENT ** (1.0 / alpha)
    decay = lambda k: np.exp(-(k**alpha))
    with np.errstate(all="ignore"):
        if u == 0.0:
            val, err = integrate.quad(decay, 0.0, cutoff, limit=500, epsabs=_PDF_ABS_TOL, epsrel=1e-12)
        else:
            val, err = integrate.quad(decay, 0.0, cutoff, weight="cos", wvar=u, limit=4000,
                                      epsabs=_PDF_ABS_TOL, epsrel=1e-12)
    if err > 1e-9:
        raise NumericAccuracyError(
            f"stable density quadrature at u={u}, alpha={alpha} reached only {err:.2e}", err / np.pi)
    return val / np.pi


def _standard_symmetric_pdf(u, alpha):
    """Reference density of the standard symmetric law (scalar u)."""
    u = abs(float(u))
    if alpha == 2.0:
        return math.exp(-u * u / 4) / (2 * math.sqrt(math.pi))
    if alpha == 1.0:
        return 1.0 / (math.pi * (1 + u * u))
    if u == 0.0:
        return math.gamma(1 + 1 / alpha) / math.pi
    if u > SERIES_SWITCH:
        value, err = _series_pdf(u, alpha)
        if err <= 1e-10 * abs(value):
            return float(value)
    return _quad_pdf(u, alpha)


def _kanter_a(theta, alpha):
    s_a = np.sin(alpha * theta)
    return (s_a / np.sin(theta)) ** (1 / (1 - alpha)) * np.sin((1 - alpha) * theta) / s_a


def _standard_one_sided_pdf(x, alpha):
    """Density of the unit subordinator, from Kanter's integral representation."""
    x = float(x)
    if x <= 0.0:
        return 0.0
    c = x ** (-alpha / (1 - alpha))

    def integrand(theta):
        a = _kanter_a(theta, alpha)
        return a * np.exp(-c * a)

    with np.errstate(all="ignore"):
        val, err = integrate.quad(integrand, 0.0, np.pi, limit=400, epsabs=0.0, epsrel=1e-10)
    pref = alpha / (1 - alpha) * x ** (-1 / (1 - alpha)) / np.pi
    if err > 1e-7 * max(abs(val), 1e-300) and pref * err > 1e-12:
        raise NumericAccuracyError(f"one-sided density quadrature at x={x} did not converge", pref * err)
    return pref * val


def stable_pdf(params: StableParams, x):
    """Density of ``params`` at ``x`` (scalar or array)."""
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise InputError("x must be finite")
    u = (xs - params.location) / params.scale
    if params.sided == SYMMETRIC:
        fn = _standard_symmetric_pdf
    else:
        fn = _standard_one_sided_pdf
    out = np.array([fn(ui, params.alpha) for ui in u.ravel()]).reshape(u.shape) / params.scale
    return float(out) if out.ndim == 0 else out


def tail_mass(alpha: float, u: float) -> float:
    """P(X > u) for the standard symmetric law, u beyond the series switch point."""
    if alpha == 2.0:
        return 0.5 * math.erfc(u / 2)
    if alpha == 1.0:
        return 0.5 - math.atan(u) / math.pi
    n = np.arange(1, _SERIES_TERMS + 1, dtype=float)
    logmag = special.gammaln(n * alpha) - special.gammaln(n + 1) - n * alpha * math.log(u)
    terms = np.where(n % 2 == 1, 1.0, -1.0) * np.sin(n * np.pi * alpha / 2) * np.exp(logmag)
    if alpha > 1:
        terms = terms[: int(np.argmin(logmag))]
    return float(terms.sum() / np.pi)


# vectorized evaluator used inside least-squares loops ----------------------


def _fast_switch(alpha):
    if alpha >= 1.0:
        return SERIES_SWITCH
    if alpha >= 0.7:
        return 3.0
    if alpha >= 0.5:
        return 1.0
    return 0.5


def _transform_nodes(alpha, umax, per_panel=8):
    cutoff = _CUTOFF_EXPONENT ** (1.0 / alpha)
    gx, gw = np.polynomial.legendre.leggauss(per_panel)
    h = min(np.pi / umax, cutoff)
    edges = np.arange(0.0, cutoff + h, h)
    graded = h * 2.0 ** -np.arange(1, 40)[::-1]
    edges = np.concatenate([[0.0], graded, edges[1:]])
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    k = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel() * np.exp(-(k**alpha))
    return k, w


def symmetric_pdf_fast(u, alpha):
    """Vectorized standard symmetric density; agrees with :func:`stable_pdf` to ~1e-10."""
    u = np.abs(np.asarray(u, dtype=float))
    if alpha == 2.0:
        return np.exp(-u * u / 4) / (2 * np.sqrt(np.pi))
    if alpha == 1.0:
        return 1.0 / (np.pi * (1 + u * u))
    out = np.empty_like(u)
    umax = _fast_switch(alpha)
    core = u <= umax
    if np.any(core):
        k, w = _transform_nodes(alpha, umax)
        uc = u[core]
        out[core] = np.cos(np.multiply.outer(uc, k)) @ w / np.pi
    if np.any(~core):
        out[~core] = _series_horner(u[~core], alpha) if alpha < 1 else _series_pdf(u[~core], alpha)[0]
    return out


def _series_horner(u, alpha):
    """Convergent alpha < 1 expansion as a polynomial in u**-alpha, cut where terms drop below 1e-17."""
    n = np.arange(1, _SERIES_TERMS + 1, dtype=float)
    logc = special.gammaln(n * alpha + 1) - special.gammaln(n + 1)
    logx_max = -alpha * np.log(u.min())
    logmag = logc + n * logx_max
    cut = np.flatnonzero((logmag < logmag.max() - 40.0) & (n > np.argmax(logmag) + 1))
    m = int(cut[0]) if cut.size else n.size
    coeff = np.where(n[:m] % 2 == 1, 1.0, -1.0) * np.sin(n[:m] * np.pi * alpha / 2) * np.exp(logc[:m])
    x = u ** -alpha
    acc = np.zeros_like(u)
    for c in coeff[::-1]:
        acc = (acc + c) * x
    return acc / (np.pi * u)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def sample_symmetric_standard(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Chambers-Mallows-Stuck transform for the standard symmetric law."""
    phi = np.pi * (rng.random(size) - 0.5)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(phi)
    if alpha == 2.0:
        return 2.0 * np.sqrt(w) * np.sin(phi)
    return (np.sin(alpha * phi) / np.cos(phi) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha))


def sample_one_sided_standard(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Kanter's rejection-free sampler for the unit positive subordinator."""
    theta = np.pi * rng.random(size)
    w = rng.standard_exponential(size)
    with np.errstate(divide="ignore", over="ignore"):
        out = (np.sin(alpha * theta) / np.sin(theta) ** (1.0 / alpha)
               * (np.sin((1.0 - alpha) * theta) / w) ** ((1.0 - alpha) / alpha))
    # theta == 0 has probability 2**-53 per draw but would give 0/0.
    return np.where(np.isfinite(out) & (out > 0), out, np.finfo(float).tiny)


def stable_sample(params: StableParams, seed: int, count: int) -> SampleBatch:
    if count < 1:
        raise InputError("count must be at least 1")
    rng = make_rng(seed)
    if params.sided == SYMMETRIC:
        z = sample_symmetric_standard(rng, params.alpha, count)
    else:
        z = sample_one_sided_standard(rng, params.alpha, count)
    values = params.location + params.scale * z
    return SampleBatch(values=values, seed=int(seed), count=int(count), params=params)


# ---------------------------------------------------------------------------
# shape fitting
# ---------------------------------------------------------------------------

ALPHA_FIT_BOUNDS = (0.4, 2.0)
_BIN_NODES, _BIN_WEIGHTS = np.polynomial.legendre.leggauss(5)


def standard_half_width(alpha: float, tol: float = 1e-6) -> float:
    """Half width at half maximum of the unit-scale symmetric law, by bisection."""
    peak = math.gamma(1 + 1 / alpha) / math.pi
    target = 0.5 * peak
    lo, hi = 0.0, 1.0
    while _standard_symmetric_pdf(hi, alpha) > target:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _standard_symmetric_pdf(mid, alpha) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def stable_fwhm(params: StableParams, tol: float = 1e-6) -> float:
    """Full width at half maximum of a symmetric law; bisection tolerance ``tol * scale``."""
    if params.sided != SYMMETRIC:
        raise ParameterDomainError("FWHM is defined here for the symmetric family only")
    return 2.0 * params.scale * standard_half_width(params.alpha, tol)


@dataclass(frozen=True, eq=False)
class StableFit:
    params: StableParams
    amplitude: float
    r_squared: float
    covariance: np.ndarray
    flags: tuple[str, ...] = ()
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def alpha_ci95(self) -> float:
        return 1.96 * math.sqrt(max(self.covariance[1, 1], 0.0))

    def __iter__(self):
        yield self.params
        yield self.r_squared


def _model(theta, x, dx, binned):
    amp, alpha, scale, loc = theta
    if binned:
        pts = x[:, None] + 0.5 * dx * _BIN_NODES[None, :]
        vals = symmetric_pdf_fast((pts - loc) / scale, alpha) @ (0.5 * _BIN_WEIGHTS)
    else:
        vals = symmetric_pdf_fast((x - loc) / scale, alpha)
    return amp * vals / scale


def _crossing_half_width(x, y, level):
    """Half width of the region where y > level, from linear interpolation at both crossings."""
    i_max = int(np.argmax(y))
    above = y > level
    left = i_max
    while left > 0 and above[left - 1]:
        left -= 1
    right = i_max
    while right < len(y) - 1 and above[right + 1]:
        right += 1
    if left == 0 or right == len(y) - 1:
        return None
    xl = np.interp(level, [y[left - 1], y[left]], [x[left - 1], x[left]])
    xr = np.interp(level, [y[right + 1], y[right]], [x[right + 1], x[right]])
    return 0.5 * (xr - xl)


_ALPHA_TABLE = np.linspace(0.5, 2.0, 31)
_RATIO_TABLE: np.ndarray | None = None


def _width_ratio_table():
    """(width at 10% of max) / (width at 50% of max) as a function of alpha; decreasing."""
    global _RATIO_TABLE
    if _RATIO_TABLE is None:
        u = np.concatenate([np.linspace(0.0, 4.0, 801), np.linspace(4.01, 60.0, 400)])
        ratios = []
        for a in _ALPHA_TABLE:
            f = symmetric_pdf_fast(u, a)
            peak = f[0]
            w50 = np.interp(-0.5 * peak, -f, u)
            w10 = np.interp(-0.1 * peak, -f, u)
            ratios.append(w10 / w50)
        _RATIO_TABLE = np.array(ratios)
    return _RATIO_TABLE


def _initial_guess(x, y, integral):
    peak = float(y.max())
    hw50 = _crossing_half_width(x, y, 0.5 * peak)
    hw10 = _crossing_half_width(x, y, 0.1 * peak)
    loc = float(x[int(np.argmax(y))])
    w = y / y.sum()
    if hw50 is None:
        hw50 = float(np.sqrt(max(np.sum(w * (x - loc) ** 2), (x[1] - x[0]) ** 2)))
    alpha = 1.5
    if hw10 is not None and hw50 > 0:
        ratios = _width_ratio_table()
        alpha = float(np.interp(-hw10 / hw50, -ratios, _ALPHA_TABLE))
    alpha = float(np.clip(alpha, 0.55, 1.95))
    scale = hw50 / standard_half_width(alpha, tol=1e-4)
    return np.array([integral, alpha, scale, loc])


def stable_fit(curve: DensitySnapshot, exclusion: float | None = None, *,
               alpha_bounds=ALPHA_FIT_BOUNDS, binned: bool | None = None,
               max_nfev: int = 400) -> StableFit:
    """Least-squares fit of ``amplitude * stable_pdf`` to a density curve.

    ``exclusion`` is a half-width (in x units) around the curve's peak whose
    points are left out of the residuals.  ``binned`` selects bin-averaged model
    values; by default it follows ``curve.meta['binned']``.
    """
    x, y = curve.x_grid, curve.density
    if x.size < 20:
        raise InputError("stable_fit needs at least 20 points")
    integral = curve.integral
    if not integral > 0 or not np.any(y > 0):
        raise InputError("curve has zero integral")
    if binned is None:
        binned = bool(curve.meta.get("binned", False))
    dx = curve.dx
    theta0 = _initial_guess(x, y, integral)
    mask = np.ones_like(x, dtype=bool)
    if exclusion:
        mask = np.abs(x - theta0[3]) > exclusion
        if mask.sum() < 10:
            raise InputError("exclusion window leaves fewer than 10 points")
    xf, yf = x[mask], y[mask]
    yscale = float(yf.max()) or 1.0

    def residuals(theta):
        return (_model(theta, xf, dx, binned) - yf) / yscale

    a_lo, a_hi = alpha_bounds
    theta0[1] = np.clip(theta0[1], a_lo + 1e-6, a_hi - 1e-6)
    span = x[-1] - x[0]
    lower = [0.0, a_lo, dx * 1e-3, x[0] - span]
    upper = [np.inf, a_hi, 10 * span, x[-1] + span]
    x_scale = np.array([integral, 0.5, theta0[2], theta0[2]])
    try:
        sol = optimize.least_squares(residuals, theta0, bounds=(lower, upper), x_scale=x_scale,
                                     method="trf", max_nfev=max_nfev, xtol=1e-10, ftol=1e-10)
    except (ValueError, FloatingPointError) as exc:
        raise FitFailure(f"stable fit raised: {exc}", best=theta0) from exc
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise FitFailure(f"stable fit did not converge: {sol.message}", best=sol.x)
    amp, alpha, scale, loc = (float(v) for v in sol.x)
    resid = sol.fun * yscale
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((yf - yf.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    jac = sol.jac * yscale
    dof = max(xf.size - 4, 1)
    try:
        cov = np.linalg.pinv(jac.T @ jac) * (ss_res / dof)
    except np.linalg.LinAlgError:
        cov = np.full((4, 4), np.nan)
    flags = []
    if alpha >= a_hi - 1e-6:
        flags.append("alpha_at_upper_bound")
    if alpha <= a_lo + 1e-6:
        flags.append("alpha_at_lower_bound")
    params = StableParams(alpha=min(alpha, 2.0), scale=scale, location=loc)
    return StableFit(params=params, amplitude=amp, r_squared=r2, covariance=cov,
                     flags=tuple(flags), details={"nfev": sol.nfev, "binned": binned,
                                                  "n_points": int(xf.size)})


# ---------------------------------------------------------------------------
# tail index
# ---------------------------------------------------------------------------


def _hill(sorted_desc_top, k):
    logs = np.log(sorted_desc_top[: k + 1])
    return 1.0 / (logs[:k].mean() - logs[k])


def _top(values, k):
    part = np.partition(values, values.size - k - 1)[values.size - k - 1:]
    return np.sort(part)[::-1]


def tail_exponent(samples: SampleBatch | np.ndarray, tail_fraction: float = 0.05, *,
                  n_boot: int = 200, seed: int = 0) -> ExponentFit:
    """Hill estimate of the tail index of |x - median| with a bootstrap 95% interval."""
    values = np.asarray(samples.values if isinstance(samples, SampleBatch) else samples, dtype=float)
    n = values.size
    if n < 1000:
        raise InputError("tail_exponent needs at least 1000 samples")
    if not 0 < tail_fraction <= 0.2:
        raise InputError("tail_fraction must lie in (0, 0.2]")
    k = int(tail_fraction * n)
    if k < 10:
        raise InputError("too few tail points")
    dev = np.abs(values - np.median(values))
    top = _top(dev, k)
    if top[k] <= 0:
        raise InputError("tail contains ties at zero")
    est = _hill(top, k)

    rng = make_rng(seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        resample = values[rng.integers(0, n, n)]
        d = np.abs(resample - np.median(resample))
        boots[b] = _hill(_top(d, k), k)
    lo, hi = np.percentile(boots, [2.5, 97.5])
    ci = max(est - lo, hi - est, 0.0)

    # goodness: log survival against log deviation over the tail points
    logx = np.log(top[:k])
    logs = np.log(np.arange(1, k + 1) / n)
    r = np.corrcoef(logx, logs)[0, 1]
    return ExponentFit(exponent=float(est), ci95=float(ci), r_squared=float(r * r), method="tail",
                       details={"k": k, "bootstrap": n_boot})
