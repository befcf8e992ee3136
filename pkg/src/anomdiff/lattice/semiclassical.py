"""Semiclassical bipotential model of Sisyphus diffusion.

Between sublevel switches an atom moves on U_s(z) = (U0/2)(-2 + s cos 2z),
s = +1 or -1, integrated with a fourth-order symplectic (Yoshida) scheme.
Switches s=+1 -> -1 occur at rate gamma sin^2 z and s=-1 -> +1 at gamma cos^2 z;
each adds a kick of +-switch_recoil and a uniform emission kick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats

from ..ensemble import block_ranges, config_digest, derive_seed, run_blocks
from ..errors import IntegratorError, ParameterDomainError
from ..records import DensitySnapshot, histogram_snapshot
from ..stable_law import make_rng
from .config import LatticeConfig

MODULE = "sisyphus_lattice.semiclassical"

_CBRT2 = 2.0 ** (1.0 / 3.0)
_W1 = 1.0 / (2.0 - _CBRT2)
_W0 = -_CBRT2 * _W1
_C1 = 0.5 * _W1
_C2 = 0.5 * (_W0 + _W1)


@dataclass(frozen=True)
class SemiclassicalState:
    position: np.ndarray  # um
    momentum: np.ndarray  # hbar k
    sublevel: np.ndarray  # +1 plus, -1 minus

    def __post_init__(self):
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.momentum))):
            raise ParameterDomainError("phase-space values must be finite")
        if not np.all(np.isin(self.sublevel, (-1, 1))):
            raise ParameterDomainError("sublevel must be +1 or -1")


@numba.njit(cache=True)
def _potential(z, s, u0):
    return 0.5 * u0 * (-2.0 + s * math.cos(2.0 * z))


@numba.njit(cache=True)
def _rate(z, s, gamma):
    c = math.cos(z)
    if s > 0:
        return gamma * (1.0 - c * c)
    return gamma * c * c


@numba.njit(cache=True)
def _yoshida(z, p, s, u0, dt):
    z += _C1 * dt * 2.0 * p
    p += _W1 * dt * s * u0 * math.sin(2.0 * z)
    z += _C2 * dt * 2.0 * p
    p += _W0 * dt * s * u0 * math.sin(2.0 * z)
    z += _C2 * dt * 2.0 * p
    p += _W1 * dt * s * u0 * math.sin(2.0 * z)
    z += _C1 * dt * 2.0 * p
    return z, p


@numba.njit(cache=True)
def _segment_step(energy, u0, step_scale, gamma):
    """Step size for a free segment: resolves the well frequency, the fastest
    lattice-crossing phase 4|p|, and the switch hazard."""
    p_max = math.sqrt(max(energy - (-u0 - 0.5 * abs(u0)), 0.0))
    freq = 2.0 * math.sqrt(abs(u0)) + 4.0 * p_max + 1e-12
    dt = step_scale / freq
    if gamma > 0.0:
        dt = min(dt, 0.05 / gamma)
    return dt


@numba.njit(cache=True)
def _trajectories(rng, z0, p0, s0, t0, times, out_z, out_p, esc, n_esc, n_jump, u0, gamma,
                  switch_recoil, emission_recoil, step_scale, tol):
    """Integrate every trajectory from t0 through the last time in ``times``.

    Returns the index of the first trajectory whose energy drift exceeded the
    tolerance, or -1.  out_p receives the momentum at the final time and n_jump
    the number of switches after t = 0.
    """
    n_snap = times.size
    t_end = times[n_snap - 1]
    u_top = -u0 + 0.5 * abs(u0)  # barrier top of either potential
    max_esc = esc.shape[1]
    for i in range(z0.size):
        z = z0[i]
        p = p0[i]
        s = s0[i]
        t = t0
        k = 0
        while k < n_snap and times[k] <= t:
            out_z[k, i] = z
            k += 1
        threshold = rng.standard_exponential()
        hazard = 0.0
        e0 = p * p + _potential(z, s, u0)
        scale = max(abs(e0), abs(u0))
        dt_seg = _segment_step(e0, u0, step_scale, gamma)
        bound = e0 < u_top
        escape_t = 0.0
        escape_v = 0.0
        escaped = False
        r0 = _rate(z, s, gamma)
        while t < t_end:
            dt = dt_seg
            snap = False
            if t + dt >= times[k]:
                dt = times[k] - t
                snap = True
            z, p = _yoshida(z, p, s, u0, dt)
            t = times[k] if snap else t + dt
            r1 = _rate(z, s, gamma)
            hazard += 0.5 * (r0 + r1) * dt
            r0 = r1
            e = p * p + _potential(z, s, u0)
            if abs(e - e0) > tol * scale:
                return i
            while k < n_snap and times[k] <= t:
                out_z[k, i] = z
                k += 1
            if hazard >= threshold and t < t_end:
                s = -s
                if t >= 0.0:
                    n_jump[i] += 1
                sign = 1.0 if rng.random() < 0.5 else -1.0
                p += sign * switch_recoil + emission_recoil * (2.0 * rng.random() - 1.0)
                threshold = rng.standard_exponential()
                hazard = 0.0
                e0 = p * p + _potential(z, s, u0)
                scale = max(abs(e0), abs(u0))
                dt_seg = _segment_step(e0, u0, step_scale, gamma)
                r0 = _rate(z, s, gamma)
                now_bound = e0 < u_top
                if bound and not now_bound:
                    escaped = True
                    escape_t = t
                    escape_v = 2.0 * abs(p)
                elif now_bound and not bound and escaped:
                    m = n_esc[i]
                    if m < max_esc:
                        esc[i, m, 0] = escape_v
                        esc[i, m, 1] = t - escape_t
                        n_esc[i] = m + 1
                    escaped = False
                bound = now_bound
        out_p[i] = p
    return -1


def _initial_state(cfg: LatticeConfig, rng, n):
    """Lattice phase z in [0, pi), momentum, sublevel and cloud offset (um) of each atom."""
    cloud = rng.normal(0.0, cfg.initial_width, n) if cfg.initial_width > 0 else np.zeros(n)
    z = np.pi * rng.random(n)
    p = rng.normal(0.0, cfg.initial_momentum_width, n) if cfg.initial_momentum_width > 0 else np.zeros(n)
    s = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    return z, p, s, cloud


def _run_block(task):
    """Integrate one block from t0 and return positions (1/k) relative to the site held at t = 0."""
    cfg, seedseq, n, first_index, times_internal, t0 = task
    rng = make_rng(seedseq)
    z, p, s, cloud = _initial_state(cfg, rng, n)
    # the clock starts after the lead-in: record t = 0 as well and measure from the site held then
    times_all = np.union1d([0.0], times_internal) if t0 < 0 else times_internal
    out_z = np.empty((times_all.size, n))
    out_p = np.empty(n)
    esc = np.zeros((n, cfg.max_escapes, 2))
    n_esc = np.zeros(n, dtype=np.int64)
    n_jump = np.zeros(n, dtype=np.int64)
    bad = _trajectories(rng, z, p, s, t0, times_all, out_z, out_p, esc, n_esc, n_jump, float(cfg.u0),
                        float(cfg.gamma), float(cfg.switch_recoil), float(cfg.emission_recoil),
                        float(cfg.step_scale), float(cfg.energy_tolerance))
    if bad >= 0:
        raise IntegratorError(f"energy drift beyond {cfg.energy_tolerance:g} relative in trajectory "
                              f"{first_index + bad}; reduce step_scale", trajectory=first_index + bad)
    if t0 < 0:
        site = np.pi * np.floor(out_z[np.searchsorted(times_all, 0.0)] / np.pi)
        out_z = out_z[np.searchsorted(times_all, times_internal)] - site
    out_z += cloud * cfg.wavevector
    pairs = np.concatenate([esc[i, :n_esc[i]] for i in range(n)]) if n_esc.any() else np.empty((0, 2))
    return out_z, out_p, pairs, n_jump


@dataclass(frozen=True, eq=False)
class SemiclassicalRun:
    times: np.ndarray  # ms
    positions: np.ndarray  # um, (n_times, n_trajectories)
    final_momentum: np.ndarray  # hbar k
    escapes: np.ndarray  # (n, 2): escape speed (recoil velocities), flight duration (ms)
    jumps: np.ndarray  # sublevel switches per trajectory between t = 0 and the last time

    @property
    def scattering_rate(self) -> float:
        """Mean switches per atom per ms after t = 0."""
        return float(self.jumps.mean() / self.times[-1]) if self.times[-1] > 0 else math.nan


def run_semiclassical(config: LatticeConfig, seed: int, workers: int = 1,
                      times_ms=None, lead_in=None) -> SemiclassicalRun:
    """Run the ensemble and return raw positions at ``times_ms`` (default: the snapshot times)."""
    times = np.asarray(config.snapshot_times if times_ms is None else times_ms, dtype=float)
    if times.size == 0:
        raise ParameterDomainError("no output times")
    lead = config.lead_in if lead_in is None else float(lead_in)
    t_int = config.to_internal_time(times)
    t0 = -lead * config.recoil_energy
    blocks = block_ranges(config.n_trajectories, config.block_size)
    tasks = [(config, derive_seed(seed, MODULE, b), hi - lo, lo, t_int, t0)
             for b, (lo, hi) in enumerate(blocks)]
    results = run_blocks(_run_block, tasks, workers)
    pos = config.to_um(np.concatenate([r[0] for r in results], axis=1))
    mom = np.concatenate([r[1] for r in results])
    esc = np.concatenate([r[2] for r in results])
    esc[:, 1] /= config.recoil_energy
    return SemiclassicalRun(times, pos, mom, esc, np.concatenate([r[3] for r in results]))


def snapshots_of(run: SemiclassicalRun, config, seed, source) -> list[DensitySnapshot]:
    digest = config_digest(config)
    return [histogram_snapshot(pos, t, n_bins=config.n_bins, span_fraction=config.span_fraction,
                               meta={"seed": int(seed), "config_digest": digest,
                                     "n_atoms": int(pos.size), "source": source})
            for t, pos in zip(run.times, run.positions)]


def simulate_semiclassical(config: LatticeConfig, seed: int, workers: int = 1) -> list[DensitySnapshot]:
    run = run_semiclassical(config, seed, workers)
    return snapshots_of(run, config, seed, MODULE)


@dataclass(frozen=True, eq=False)
class VelocityHistogram:
    edges: np.ndarray  # hbar k
    density: np.ndarray
    momenta: np.ndarray

    @property
    def excess_kurtosis(self) -> float:
        return float(stats.kurtosis(self.momenta, fisher=True))


def equilibrate(config: LatticeConfig, duration: float, seed: int = 0, workers: int = 1,
                bins: int = 200) -> VelocityHistogram:
    """Momentum distribution after ``duration`` ms of lattice-on evolution from the initial cloud."""
    if not duration >= 0:
        raise ParameterDomainError("duration must be non-negative")
    if duration == 0:
        rng = make_rng(derive_seed(seed, MODULE, 0))
        _, p, _, _ = _initial_state(config, rng, config.n_trajectories)
    else:
        p = run_semiclassical(config, seed, workers, times_ms=[0.0], lead_in=duration).final_momentum
    density, edges = np.histogram(p, bins=bins, density=True)
    return VelocityHistogram(edges, density, p)


def escape_flight_correlation(config: LatticeConfig, seed: int, workers: int = 1) -> tuple[float, int]:
    """Pearson correlation of escape speed with the following unbound-interval duration."""
    esc = run_semiclassical(config, seed, workers).escapes
    if esc.shape[0] < 3:
        raise ParameterDomainError("too few completed flights for a correlation estimate")
    return float(stats.pearsonr(esc[:, 0], esc[:, 1])[0]), int(esc.shape[0])
