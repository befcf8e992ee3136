"""Sisyphus polarization-lattice simulators: semiclassical and quantum-trajectory."""

from .config import LatticeConfig
from .semiclassical import (SemiclassicalState, equilibrate, escape_flight_correlation, run_semiclassical,
                            simulate_semiclassical)

__all__ = ["LatticeConfig", "SemiclassicalState", "equilibrate", "escape_flight_correlation",
           "run_semiclassical", "simulate_semiclassical"]
