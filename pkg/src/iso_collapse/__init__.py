"""Simulation and verification of continuous isotropic measurement on Lie-group irreps.

The measured system carries a unitary irrep of SU(2) or SU(3); a continuous
weak measurement of every generator at once drives the Kraus operator
towards a coherent-state projector. The subpackages build the
representations, integrate the Kraus flow and check the resulting
collapse statistics.
"""

from .lie_rep import build_spin_irrep, build_su3_irrep, weight_diagram
from .sde_engine import TrajectoryConfig, run_trajectory
from .ensemble import EnsembleConfig, run_ensemble

__version__ = "0.1.0"

__all__ = [
    "build_spin_irrep",
    "build_su3_irrep",
    "weight_diagram",
    "TrajectoryConfig",
    "run_trajectory",
    "EnsembleConfig",
    "run_ensemble",
]
