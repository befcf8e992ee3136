"""Monte Carlo wave-function (quantum trajectory) model of the same lattice.

Each trajectory is a two-component amplitude (plus, minus) on a periodic grid.
It evolves under H_eff = p^2 + U_s(z) + Raman coupling - (i/2) sum C^dag C with
Strang-split spectral steps.  The jump operators are

    C_{+-}(kappa) = sqrt(gamma) sin z e^{i kappa z} |-><+|
    C_{-+}(kappa) = sqrt(gamma) cos z e^{i kappa z} |+><-|

with kappa a uniform emission kick in [-emission_recoil, emission_recoil].  The
sin/cos amplitude itself carries the +-1 absorption recoil, so switch_recoil is
not added again.  A jump happens when the squared norm falls below a uniform
random threshold.

The window is recentred on the wavepacket by whole lattice periods, under which
the potentials are invariant, and densities are accumulated on the grid in
absolute coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..ensemble import config_digest, derive_seed, run_blocks
from ..errors import IntegratorError, ParameterDomainError
from ..records import DensitySnapshot
from ..stable_law import make_rng
from .config import LatticeConfig

MODULE = "sisyphus_lattice.mcwf"
NORM_ROUNDING = 1e-12  # relative slack for floating-point rounding in unitary steps
EDGE_PERIODS = 5
EDGE_LIMIT = 1e-3


@dataclass(frozen=True)
class GridSpec:
    n_points: int = 2048
    periods: int = 128

    def __post_init__(self):
        n = self.n_points
        if n < 2 or n & (n - 1):
            raise ParameterDomainError("n_points must be a power of two")
        if self.periods < 2 * EDGE_PERIODS + 2:
            raise ParameterDomainError(f"grid must span at least {2 * EDGE_PERIODS + 2} lattice periods")
        if n % self.periods:
            raise ParameterDomainError("n_points must be a multiple of periods")
        if self.points_per_period < 16:
            raise ParameterDomainError("grid too coarse: fewer than 16 points per lattice period")

    @property
    def points_per_period(self) -> int:
        return self.n_points // self.periods

    @property
    def dz(self) -> float:
        return math.pi / self.points_per_period  # lattice period is pi in units of 1/k

    @property
    def z(self) -> np.ndarray:
        return (np.arange(self.n_points) - self.n_points // 2) * self.dz

    @property
    def momenta(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dz)

    @property
    def p_max(self) -> float:
        return math.pi / self.dz

    @property
    def momentum_quantum(self) -> float:
        return 2.0 * math.pi / (self.n_points * self.dz)


@dataclass(eq=False)
class QuantumTrajectory:
    psi: np.ndarray  # (2, n_points) complex: plus, minus
    grid: GridSpec
    offset: int = 0  # window position in lattice periods

    def __post_init__(self):
        if self.psi.shape != (2, self.grid.n_points):
            raise ParameterDomainError("amplitude shape does not match the grid")

    @property
    def norm(self) -> float:
        return float(np.vdot(self.psi, self.psi).real * self.grid.dz)


def max_timestep(config: LatticeConfig, grid: GridSpec) -> float:
    """Largest stable step: 0.1 of the fastest phase period and 0.1 of the inverse jump rate."""
    e_max = grid.p_max ** 2 + 1.5 * config.model_depth + abs(config.raman_coupling)
    dt = 0.1 * 2.0 * math.pi / e_max
    if config.gamma > 0:
        dt = min(dt, 0.1 / config.gamma)
    return dt


class _Propagator:
    def __init__(self, config: LatticeConfig, grid: GridSpec):
        self.cfg = config
        self.grid = grid
        z = grid.z
        u0 = config.u0
        self.u = np.stack([0.5 * u0 * (-2.0 + np.cos(2 * z)), 0.5 * u0 * (-2.0 - np.cos(2 * z))])
        self.decay = config.gamma * np.stack([np.sin(z) ** 2, np.cos(z) ** 2])
        self.p2 = grid.momenta ** 2
        self.z = z
        self._cache: dict[float, tuple] = {}

    def operators(self, dt):
        ops = self._cache.get(dt)
        if ops is None:
            h = 0.5 * dt
            omega = self.cfg.raman_coupling
            if omega == 0.0:
                pot = np.exp(-1j * self.u * h), None
            else:
                a = 0.5 * (self.u[0] + self.u[1])
                d = 0.5 * (self.u[0] - self.u[1])
                w = np.sqrt(d * d + omega * omega)
                ph = np.exp(-1j * a * h)
                c, s = np.cos(w * h), np.sin(w * h) / w
                # exp(-i h (d sz + omega sx)) entries
                pot = (np.stack([ph * (c - 1j * s * d), ph * (c + 1j * s * d)]), ph * (-1j * s * omega))
            ops = (pot, np.exp(-0.5 * self.decay * h), np.exp(-1j * self.p2 * dt))
            if len(self._cache) < 8:
                self._cache[dt] = ops
        return ops

    def _half(self, psi, pot, damp):
        diag, off = pot
        if off is None:
            psi *= diag
        else:
            plus = diag[0] * psi[0] + off * psi[1]
            minus = off * psi[0] + diag[1] * psi[1]
            psi[0], psi[1] = plus, minus
        psi *= damp

    def step(self, psi, dt):
        pot, damp, kin = self.operators(dt)
        self._half(psi, pot, damp)
        psi[:] = np.fft.ifft(np.fft.fft(psi, axis=1) * kin, axis=1)
        self._half(psi, pot, damp)


@dataclass(eq=False)
class TrajectoryResult:
    densities: np.ndarray  # (n_times, n_points) probability per grid cell
    offsets: np.ndarray  # (n_times,) window offset in periods
    valid: np.ndarray  # (n_times,) False after an excursion abort
    n_jumps: int = 0
    flags: tuple[str, ...] = ()
    norm_trace: list = field(default_factory=list)  # (time, norm, jumped) per step when requested
    channel_sums: list = field(default_factory=list)


PACKET_FRACTION = 0.25  # momentum width of one packet relative to initial_momentum_width


def _initial_psi(config: LatticeConfig, grid: GridSpec, rng):
    """One coherent packet of the Gaussian initial ensemble.

    Packets have momentum width f * p0 and mean momentum drawn from
    N(0, p0^2 (1 - f^2)), so the ensemble momentum law is N(0, p0^2) while each
    trajectory stays compact.  The centre is uniform over one lattice period
    and the cloud position enters as a whole-period window offset.
    """
    z = grid.z
    p0 = max(config.initial_momentum_width, 1e-3)
    sigma_p = PACKET_FRACTION * p0
    mean_p = rng.normal(0.0, p0 * math.sqrt(1.0 - PACKET_FRACTION ** 2))
    centre_um = rng.normal(0.0, config.initial_width) if config.initial_width > 0 else 0.0
    offset = int(round(centre_um * config.wavevector / math.pi))
    centre = math.pi * rng.random()
    psi = np.zeros((2, grid.n_points), complex)
    comp = 0 if rng.random() < 0.5 else 1
    kq = grid.momentum_quantum
    mean_p = round(mean_p / kq) * kq  # periodic on the window
    psi[comp] = np.exp(-((z - centre) * sigma_p) ** 2 + 1j * mean_p * z)
    psi /= math.sqrt(np.vdot(psi, psi).real * grid.dz)
    return QuantumTrajectory(psi, grid, offset)


def _centroid_period(traj: QuantumTrajectory) -> int:
    """Absolute index of the lattice period holding the circular centroid of the packet."""
    g = traj.grid
    dens = (np.abs(traj.psi[0]) ** 2 + np.abs(traj.psi[1]) ** 2).reshape(g.periods, -1).sum(axis=1)
    ang = 2.0 * np.pi * np.arange(g.periods) / g.periods
    c = math.atan2(float(dens @ np.sin(ang)), float(dens @ np.cos(ang)))
    return traj.offset + int(round(c / (2.0 * np.pi) * g.periods)) % g.periods - g.periods // 2


def _edge_fraction(psi, grid: GridSpec) -> float:
    m = EDGE_PERIODS * grid.points_per_period
    dens = np.abs(psi[0]) ** 2 + np.abs(psi[1]) ** 2
    total = dens.sum()
    return float((dens[:m].sum() + dens[-m:].sum()) / total)


def _recentre(traj: QuantumTrajectory) -> None:
    g = traj.grid
    shift = traj.offset - _centroid_period(traj)
    if shift:
        traj.psi = np.roll(traj.psi, shift * g.points_per_period, axis=1)
        traj.offset -= shift


def propagate_trajectory(config: LatticeConfig, grid: GridSpec, seed, index: int, times_ms,
                         record_norm: bool = False, t0_ms: float | None = None) -> TrajectoryResult:
    """Propagate one trajectory and return its per-period densities at ``times_ms``.

    Evolution starts at -lead_in (or -t0_ms).  Motion during the lead-in is
    removed: offsets are measured from the period held at t = 0, plus the
    initial cloud offset.
    """
    rng = make_rng(derive_seed(seed, MODULE, index))
    prop = _Propagator(config, grid)
    traj = _initial_psi(config, grid, rng)
    times = config.to_internal_time(np.asarray(times_ms, float))
    t = -(config.lead_in if t0_ms is None else t0_ms) * config.recoil_energy
    dt_max = max_timestep(config, grid)
    n_t = times.size
    dens = np.zeros((n_t, grid.n_points))
    offs = np.zeros(n_t, dtype=np.int64)
    valid = np.ones(n_t, dtype=bool)
    result = TrajectoryResult(dens, offs, valid)
    threshold = rng.random()
    norm = traj.norm
    jumps = 0
    flags = []
    k = 0
    kq = grid.momentum_quantum
    z = grid.z
    cloud = traj.offset
    base = None if t < 0 else 0
    while k < n_t:
        if base is None and t >= 0:
            base = _centroid_period(traj) - cloud
        if times[k] <= t and base is not None:
            dens[k] = (np.abs(traj.psi[0]) ** 2 + np.abs(traj.psi[1]) ** 2) * grid.dz / norm
            offs[k] = traj.offset - base
            k += 1
            continue
        target = 0.0 if base is None else times[k]
        dt = min(dt_max, target - t)
        prop.step(traj.psi, dt)
        t = target if dt == target - t else t + dt
        new_norm = traj.norm
        if new_norm > norm * (1.0 + NORM_ROUNDING):
            raise IntegratorError(f"norm increased between jumps in trajectory {index} "
                                  f"({norm!r} -> {new_norm!r})", trajectory=index)
        norm = new_norm
        jumped = False
        if norm < threshold:
            w = np.array([np.sum(prop.decay[0] * np.abs(traj.psi[0]) ** 2),
                          np.sum(prop.decay[1] * np.abs(traj.psi[1]) ** 2)]) * grid.dz
            probs = w / w.sum()
            if record_norm:
                result.channel_sums.append(float(probs.sum()))
            src = 0 if rng.random() < probs[0] else 1
            # the sin/cos amplitude already carries the +-1 absorption recoil
            kappa = config.emission_recoil * (2.0 * rng.random() - 1.0)
            kappa = round(kappa / kq) * kq  # keep the kick periodic on the grid
            shape = np.sin(z) if src == 0 else np.cos(z)
            new = np.zeros_like(traj.psi)
            new[1 - src] = shape * np.exp(1j * kappa * z) * traj.psi[src]
            traj.psi = new / math.sqrt(np.vdot(new, new).real * grid.dz)
            norm = traj.norm
            threshold = rng.random()
            jumps += 1
            jumped = True
        if record_norm:
            result.norm_trace.append((t, norm, jumped))
        if _edge_fraction(traj.psi, grid) > EDGE_LIMIT:
            _recentre(traj)
            if _edge_fraction(traj.psi, grid) > EDGE_LIMIT:
                flags.append(f"excursion_abort_t{t / config.recoil_energy:.4g}ms")
                valid[k:] = False
                break
    result.n_jumps = jumps
    result.flags = tuple(flags)
    return result


def _run_trajectories(task):
    config, grid, seed, indices, times = task
    return [propagate_trajectory(config, grid, seed, i, times) for i in indices]


def simulate_mcwf(config: LatticeConfig, grid: GridSpec | None = None, seed: int = 0,
                  workers: int = 1) -> list[DensitySnapshot]:
    """Trajectory-averaged spatial density at the snapshot times."""
    grid = grid or GridSpec()
    times = np.asarray(config.snapshot_times, float)
    if times.size == 0:
        raise ParameterDomainError("no snapshot times")
    n = config.n_trajectories
    chunk = max(1, min(config.block_size, math.ceil(n / max(workers, 1))))
    tasks = [(config, grid, seed, list(range(lo, min(lo + chunk, n))), times) for lo in range(0, n, chunk)]
    results = [r for block in run_blocks(_run_trajectories, tasks, workers) for r in block]
    return _ensemble_snapshots(results, config, grid, seed, times)


def _ensemble_snapshots(results, config, grid, seed, times) -> list[DensitySnapshot]:
    """Average trajectory densities on the grid in absolute coordinates.

    Windows differ by whole lattice periods, so their grid points coincide.
    """
    ppp = grid.points_per_period
    n = grid.n_points
    dz_um = grid.dz / config.wavevector
    digest = config_digest({"config": config, "grid": grid})
    aborted = sum(1 for r in results if r.flags)
    snaps = []
    for k, t in enumerate(times):
        live = [r for r in results if r.valid[k]]
        if not live:
            raise IntegratorError(f"every trajectory left the grid window before t={t} ms")
        lo = min(int(r.offsets[k]) for r in live)
        hi = max(int(r.offsets[k]) for r in live)
        acc = np.zeros((hi - lo) * ppp + n)
        for r in live:
            start = (int(r.offsets[k]) - lo) * ppp
            acc[start:start + n] += r.densities[k]
        x = ((np.arange(acc.size) - n // 2) * grid.dz + lo * math.pi) / config.wavevector
        density = acc / len(live) / dz_um
        density /= np.trapezoid(density, x)
        meta = {"seed": int(seed), "config_digest": digest, "n_atoms": len(live), "source": MODULE,
                "aborted_trajectories": aborted}
        snaps.append(DensitySnapshot(float(t), x, density, meta))
    return snaps
