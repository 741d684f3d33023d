"""Simulation of a single-step multi-controlled Toffoli-type gate in trapped ions."""
from .crystal import CrystalModel, axial_modes, equilibrium_positions, ising_matrix, lamb_dicke_matrix
from .hamiltonians import GateConfig, RampProfile, corrected_drive, make_config, ramp_value
from .hilbert import CompositeSpace, TruncationError
from .spinmodel import ideal_itoffoli

__version__ = "0.1.0"
