"""Simulation of Procrustean entanglement concentration for OAM-entangled
qutrit photon pairs."""
from .errors import *  # noqa: F401,F403
from .states import (PureBipartiteState, NoisyState, normalize, schmidt_coefficients, entanglement_entropy,
                     fidelity, fidelity_to_max_entangled)
from .filtering import LocalFilter, apply_local_filter, procrustean_filter_for
from .optics import OpticsModel, BeamParam, coupling_vector
from .measurement import bell_i3, simulate_scan, visibility
from .optimize import OptimizationProblem, optimize_lens_config, invert_initial_states

__version__ = "0.1.0"
