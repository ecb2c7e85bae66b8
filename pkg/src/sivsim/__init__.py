"""Simulator for the SiV- ground-state spin: spectroscopy, Lindblad pulse dynamics and fits."""
from .errors import SivError
from .lindblad import LindbladModel, evolve, evolve_rk4, liouvillian, steady_state
from .model import (
    EnergySpectrum,
    MagneticField,
    OdmrLine,
    SivParameters,
    build_ground_hamiltonian,
    diagonalize,
    odmr_transitions,
    phonon_jump_operators,
    phonon_rates,
    thermal_state,
)
from .pulses import MicrowaveDrive, OpticalPump, PulseSequence, SivSystem, Wait, peak_ratio, run_sequence

__version__ = "0.1.0"
