"""Adaptive bond-dimension DMRG for spin chains."""

from .controller import ControllerConfig, PidGains
from .dmrg import DmrgConfig, DmrgResult, run_dmrg
from .errors import AdaptChiError
from .models import ModelSpec, build_mpo, exact_ground_energy, heisenberg, transverse_ising
from .mps import MatrixProductState

__version__ = "0.1.0"

__all__ = [
    "AdaptChiError",
    "ControllerConfig",
    "DmrgConfig",
    "DmrgResult",
    "MatrixProductState",
    "ModelSpec",
    "PidGains",
    "build_mpo",
    "exact_ground_energy",
    "heisenberg",
    "run_dmrg",
    "transverse_ising",
]
