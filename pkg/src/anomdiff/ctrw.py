"""Classical Levy-walk simulator: heavy-tailed trapping alternating with flights.

Each atom repeats, until the last snapshot time,

1. a trapped interval ``dwell_scale * S`` with S one-sided stable(beta_dwell)
   (exponential when beta_dwell == 1, optionally Pareto);
2. a velocity ``v_scale * V`` with V symmetric stable(mu);
3. a flight of duration ``flight_scale * E`` (E ~ Exp(1)) or, in coupled mode,
   ``flight_scale * |V|**chi * P`` with P one-sided Pareto(noise_index);
4. constant-velocity motion during the flight.

Positions at snapshot times are interpolated within flights and frozen during
trapping, then histogrammed per snapshot.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numba
import numpy as np

from .ensemble import block_ranges, config_digest, derive_seed, run_blocks
from .errors import ParameterDomainError, ResourceError
from .records import DensitySnapshot, histogram_snapshot
from .stable_law import make_rng

MODULE = "ctrw_walker"
DWELL_LAWS = ("stable", "pareto")


@dataclass(frozen=True)
class Coupling:
    """Flight duration grows as |V|**chi, with multiplicative Pareto noise."""

    chi: float = 1.0
    noise_index: float = 1.5

    def __post_init__(self):
        if not self.chi >= 0:
            raise ParameterDomainError("chi must be non-negative")
        if not self.noise_index > 0:
            raise ParameterDomainError("noise_index must be positive")


@dataclass(frozen=True)
class WalkConfig:
    mu: float = 1.5
    beta_dwell: float = 1.0
    v_scale: float = 20.0  # um/ms
    flight_scale: float = 0.5  # ms
    dwell_scale: float = 0.5  # ms
    correlation: Coupling | None = None
    initial_width: float = 200.0  # um; 0 means a delta initial condition
    n_atoms: int = 100_000
    snapshot_times: tuple[float, ...] = tuple(np.linspace(10.0, 40.0, 13))
    dwell_law: str = "stable"
    n_bins: int = 512
    span_fraction: float = 0.999
    block_size: int = 8192
    memory_budget_mb: float = 2048.0
    aggregate_flights: bool = True

    def __post_init__(self):
        times = tuple(float(t) for t in self.snapshot_times)
        object.__setattr__(self, "snapshot_times", times)
        if not 0 < self.mu <= 2:
            raise ParameterDomainError("mu must lie in (0, 2]")
        if not 0 < self.beta_dwell <= 1:
            raise ParameterDomainError("beta_dwell must lie in (0, 1]")
        for name in ("v_scale", "flight_scale", "dwell_scale"):
            if not getattr(self, name) > 0:
                raise ParameterDomainError(f"{name} must be positive")
        if self.initial_width < 0:
            raise ParameterDomainError("initial_width must be non-negative")
        if self.n_atoms < 1:
            raise ParameterDomainError("n_atoms must be at least 1")
        if not times or times[0] <= 0 or np.any(np.diff(times) <= 0):
            raise ParameterDomainError("snapshot_times must be positive and strictly increasing")
        if self.dwell_law not in DWELL_LAWS:
            raise ParameterDomainError(f"dwell_law must be one of {DWELL_LAWS}")
        if self.block_size < 1:
            raise ParameterDomainError("block_size must be positive")


DWELL_EXPONENTIAL, DWELL_STABLE, DWELL_PARETO = 0, 1, 2


@numba.njit(cache=True)
def _symmetric(rng, alpha):
    phi = np.pi * (rng.random() - 0.5)
    w = rng.standard_exponential()
    if alpha == 1.0:
        return np.tan(phi)
    if alpha == 2.0:
        return 2.0 * np.sqrt(w) * np.sin(phi)
    # two logs and one exp instead of two general powers
    return np.sin(alpha * phi) * np.exp(((1.0 - alpha) * np.log(np.cos((1.0 - alpha) * phi) / w)
                                         - np.log(np.cos(phi))) / alpha)


@numba.njit(cache=True)
def _one_sided(rng, alpha):
    theta = np.pi * rng.random()
    w = rng.standard_exponential()
    s = np.sin(theta)
    if s <= 0.0:
        return 0.0
    return (np.sin(alpha * theta) / s ** (1.0 / alpha)
            * (np.sin((1.0 - alpha) * theta) / w) ** ((1.0 - alpha) / alpha))


@numba.njit(cache=True)
def _walk_kernel(rng, x0, times, out, mu, beta, dwell_kind, v_scale, flight_scale, dwell_scale,
                 coupled, chi, noise_index):
    n_snap = times.size
    for i in range(x0.size):
        x = x0[i]
        t = 0.0
        k = 0
        while k < n_snap:
            # trapped interval: position frozen
            if dwell_kind == 0:
                d = rng.standard_exponential()
            elif dwell_kind == 1:
                d = _one_sided(rng, beta)
            else:
                d = (1.0 - rng.random()) ** (-1.0 / beta)
            t_trap_end = t + dwell_scale * d
            while k < n_snap and times[k] < t_trap_end:
                out[k, i] = x
                k += 1
            # flight at constant velocity
            v_std = _symmetric(rng, mu)
            if coupled:
                noise = (1.0 - rng.random()) ** (-1.0 / noise_index)
                tau = flight_scale * np.abs(v_std) ** chi * noise
            else:
                tau = flight_scale * rng.standard_exponential()
            v = v_scale * v_std
            t_end = t_trap_end + tau
            while k < n_snap and times[k] < t_end:
                out[k, i] = x + v * (times[k] - t_trap_end)
                k += 1
            x += v * tau
            t = t_end


@numba.njit(cache=True)
def _walk_kernel_aggregated(rng, x0, times, out, mu, beta, dwell_kind, v_scale, flight_scale,
                            dwell_scale):
    """Uncorrelated walk with whole flights between snapshots summed in law.

    For independent velocities, sum(v_i tau_i) given the durations equals
    v_scale * (sum tau_i**mu)**(1/mu) * S with S standard stable(mu), so only
    flights that straddle a snapshot time need an explicit velocity.
    """
    n_snap = times.size
    inv_mu = 1.0 / mu
    for i in range(x0.size):
        x = x0[i]
        acc = 0.0
        t = 0.0
        k = 0
        while k < n_snap:
            if dwell_kind == 0:
                d = rng.standard_exponential()
            elif dwell_kind == 1:
                d = _one_sided(rng, beta)
            else:
                d = (1.0 - rng.random()) ** (-1.0 / beta)
            t_trap_end = t + dwell_scale * d
            if times[k] < t_trap_end:
                if acc > 0.0:
                    x += v_scale * acc ** inv_mu * _symmetric(rng, mu)
                    acc = 0.0
                while k < n_snap and times[k] < t_trap_end:
                    out[k, i] = x
                    k += 1
            tau = flight_scale * rng.standard_exponential()
            t_end = t_trap_end + tau
            if k < n_snap and times[k] < t_end:
                if acc > 0.0:
                    x += v_scale * acc ** inv_mu * _symmetric(rng, mu)
                    acc = 0.0
                v = v_scale * _symmetric(rng, mu)
                while k < n_snap and times[k] < t_end:
                    out[k, i] = x + v * (times[k] - t_trap_end)
                    k += 1
                x += v * tau
            else:
                acc += tau ** mu
            t = t_end


def _simulate_block(task) -> np.ndarray:
    """Positions (n_snapshots, n) of one block of atoms."""
    cfg, seedseq, n = task
    rng = make_rng(seedseq)
    times = np.asarray(cfg.snapshot_times, dtype=float)
    x0 = rng.normal(0.0, cfg.initial_width, n) if cfg.initial_width > 0 else np.zeros(n)
    out = np.empty((times.size, n))
    if cfg.beta_dwell == 1.0:
        kind = DWELL_EXPONENTIAL
    else:
        kind = DWELL_PARETO if cfg.dwell_law == "pareto" else DWELL_STABLE
    c = cfg.correlation
    if c is None and cfg.aggregate_flights:
        _walk_kernel_aggregated(rng, x0, times, out, float(cfg.mu), float(cfg.beta_dwell), kind,
                                float(cfg.v_scale), float(cfg.flight_scale), float(cfg.dwell_scale))
        return out
    _walk_kernel(rng, x0, times, out, float(cfg.mu), float(cfg.beta_dwell), kind, float(cfg.v_scale),
                 float(cfg.flight_scale), float(cfg.dwell_scale), c is not None,
                 float(c.chi) if c else 0.0, float(c.noise_index) if c else 1.0)
    return out


def simulate_positions(config: WalkConfig, seed: int, workers: int = 1) -> np.ndarray:
    """Raw positions, shape (n_snapshots, n_atoms), before histogramming."""
    need_mb = 8.0 * config.n_atoms * len(config.snapshot_times) * 2 / 2**20
    if need_mb > config.memory_budget_mb:
        raise ResourceError(f"snapshot storage needs {need_mb:.0f} MB, budget is {config.memory_budget_mb} MB")
    blocks = block_ranges(config.n_atoms, config.block_size)
    tasks = [(config, derive_seed(seed, MODULE, b), hi - lo) for b, (lo, hi) in enumerate(blocks)]
    return np.concatenate(run_blocks(_simulate_block, tasks, workers), axis=1)


def snapshots_from_positions(positions, config, seed, *, module=MODULE, extra=None) -> list[DensitySnapshot]:
    digest = config_digest(config)
    snaps = []
    for time, pos in zip(config.snapshot_times, positions):
        meta = {"seed": int(seed), "config_digest": digest, "n_atoms": int(pos.size),
                "source": module}
        meta.update(extra or {})
        snaps.append(histogram_snapshot(pos, time, n_bins=config.n_bins,
                                        span_fraction=config.span_fraction, meta=meta))
    return snaps


def simulate_walk(config: WalkConfig, seed: int, workers: int = 1) -> list[DensitySnapshot]:
    return snapshots_from_positions(simulate_positions(config, seed, workers), config, seed)


def decoupled_reference(config: WalkConfig, seed: int, workers: int = 1) -> list[DensitySnapshot]:
    """Same dynamics with the velocity/flight-duration coupling switched off."""
    return simulate_walk(dataclasses.replace(config, correlation=None), seed, workers)
