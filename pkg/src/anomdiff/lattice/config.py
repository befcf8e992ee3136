"""Lattice configuration and unit conversions.

Internal units: length 1/k, momentum hbar*k, energy E_r = (hbar k)**2 / 2m and
time 1/omega_r with omega_r = E_r / hbar.  In these units the Hamiltonian is
p**2 + U(z) and dz/dt = 2p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterDomainError

HBAR = 1.054571817e-34  # J s
RB87_MASS = 1.443160648e-25  # kg
RB87_K = 2.0 * math.pi / 0.780241  # 1/um, D2 line


@dataclass(frozen=True)
class LatticeConfig:
    depth_recoils: float = 4.8
    # model well depth = depth_calibration * depth_recoils; maps the experimental depth axis onto the model
    depth_calibration: float = 3.0
    wavevector: float = RB87_K  # 1/um
    mass: float = RB87_MASS  # kg
    # None derives the switch rate from the depth at a fixed light-shift/rate ratio
    jump_rate_scale: float | None = None  # 1/ms
    n_trajectories: int = 10_000
    snapshot_times: tuple[float, ...] = tuple(np.linspace(10.0, 40.0, 13))  # ms
    initial_width: float = 200.0  # um
    initial_momentum_width: float = 2.0  # hbar k, cloud released from the dipole trap
    lead_in: float = 1.0  # ms of lattice-on equilibration before t = 0
    potential_sign: float = -1.0  # U0 = potential_sign * depth; red detuning is -1
    shift_to_rate: float = 5.0  # |U0| / (hbar Gamma') when jump_rate_scale is None
    switch_recoil: float = 1.0  # hbar k kick of random sign per switch (semiclassical; MCWF jumps carry it)
    emission_recoil: float = 1.0  # half-width (hbar k) of the uniform emission kick
    raman_coupling: float = 0.0  # E_r, MCWF only
    step_scale: float = 0.1  # integrator step, radians of the fastest phase
    energy_tolerance: float = 1e-6  # relative, per free segment
    n_bins: int = 512
    span_fraction: float = 0.999
    block_size: int = 256
    max_escapes: int = 64  # per trajectory, for the escape/flight diagnostic

    def __post_init__(self):
        times = tuple(float(t) for t in self.snapshot_times)
        object.__setattr__(self, "snapshot_times", times)
        if not self.depth_recoils > 0:
            raise ParameterDomainError("depth_recoils must be positive")
        if not self.depth_calibration > 0:
            raise ParameterDomainError("depth_calibration must be positive")
        if not self.wavevector > 0:
            raise ParameterDomainError("wavevector must be positive")
        if not self.mass > 0:
            raise ParameterDomainError("mass must be positive")
        if self.jump_rate_scale is not None and self.jump_rate_scale < 0:
            raise ParameterDomainError("jump_rate_scale must be non-negative")
        if self.n_trajectories < 1:
            raise ParameterDomainError("n_trajectories must be at least 1")
        if times and (times[0] < 0 or np.any(np.diff(times) <= 0)):
            raise ParameterDomainError("snapshot_times must be non-negative and strictly increasing")
        if self.initial_width < 0 or self.initial_momentum_width < 0 or self.lead_in < 0:
            raise ParameterDomainError("widths and lead_in must be non-negative")
        if self.potential_sign not in (-1.0, 1.0):
            raise ParameterDomainError("potential_sign must be -1 or +1")
        if not self.shift_to_rate > 0:
            raise ParameterDomainError("shift_to_rate must be positive")
        if not 0 < self.step_scale <= 0.5:
            raise ParameterDomainError("step_scale must lie in (0, 0.5]")
        if not self.energy_tolerance > 0:
            raise ParameterDomainError("energy_tolerance must be positive")

    @property
    def recoil_energy(self) -> float:
        """omega_r = E_r / hbar in 1/ms."""
        k = self.wavevector * 1e6
        return HBAR * k * k / (2.0 * self.mass) * 1e-3

    @property
    def model_depth(self) -> float:
        return self.depth_calibration * self.depth_recoils

    @property
    def u0(self) -> float:
        return self.potential_sign * self.model_depth

    @property
    def gamma(self) -> float:
        """Switch rate scale in units of omega_r."""
        if self.jump_rate_scale is None:
            return self.model_depth / self.shift_to_rate
        return self.jump_rate_scale / self.recoil_energy

    def to_internal_time(self, t_ms):
        return np.asarray(t_ms, dtype=float) * self.recoil_energy

    def to_um(self, z):
        return np.asarray(z, dtype=float) / self.wavevector
