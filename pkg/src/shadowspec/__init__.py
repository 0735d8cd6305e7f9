"""Spectroscopy of many-body Hamiltonians from time series of classical shadows.

Typical use::

    from shadowspec import load_config, run
    manifest = run(load_config("spinring"), "runs/spinring")
"""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .hamiltonian_io import load_hamiltonian, parse_hamiltonian, save_hamiltonian
from .models import LatticeSpec, build_fermi_hubbard, build_heisenberg_chain
from .oracle import (
    EigenSolution,
    ExtrapolationFit,
    SignalModel,
    exact_signal_model,
    extrapolate_gap,
    lowest_eigenpairs,
    rank_transition_intensities,
    snr_model,
)
from .pauli import PauliString, PauliSumHamiltonian, enumerate_local_paulis, locality_count
from .pipeline import PipelineError, RunManifest, postprocess, run, run_sweep
from .rng import generator
from .shadows import (
    ShadowSeries,
    SnapshotSet,
    estimate_pauli,
    estimate_signal_matrix,
    median_of_means,
    sample_complexity,
    sample_shadow_set,
)
from .simulator import NoiseModel, TrotterCircuit, krylov_evolve, prepare_initial_state
from .specproc import (
    Peak,
    Spectrum,
    SubspaceBasis,
    compute_C,
    cross_spectral_density,
    dominant_subspace,
    find_peaks,
    ljung_box_p,
    mean_squared_spectrum,
    screen,
    standardize,
)
from .variational import AnsatzCircuit, VQSConfig, hardware_efficient_ansatz, vqs_evolve

__version__ = "0.1.0"

__all__ = [
    "AnsatzCircuit",
    "ConfigError",
    "EigenSolution",
    "ExperimentConfig",
    "ExtrapolationFit",
    "LatticeSpec",
    "NoiseModel",
    "PauliString",
    "PauliSumHamiltonian",
    "Peak",
    "PipelineError",
    "RunManifest",
    "ShadowSeries",
    "SignalModel",
    "SnapshotSet",
    "Spectrum",
    "SubspaceBasis",
    "TrotterCircuit",
    "VQSConfig",
    "build_fermi_hubbard",
    "build_heisenberg_chain",
    "compute_C",
    "cross_spectral_density",
    "dominant_subspace",
    "enumerate_local_paulis",
    "estimate_pauli",
    "estimate_signal_matrix",
    "exact_signal_model",
    "extrapolate_gap",
    "find_peaks",
    "generator",
    "hardware_efficient_ansatz",
    "krylov_evolve",
    "ljung_box_p",
    "load_config",
    "load_hamiltonian",
    "locality_count",
    "lowest_eigenpairs",
    "mean_squared_spectrum",
    "median_of_means",
    "parse_config",
    "parse_hamiltonian",
    "postprocess",
    "prepare_initial_state",
    "rank_transition_intensities",
    "run",
    "run_sweep",
    "sample_complexity",
    "sample_shadow_set",
    "save_hamiltonian",
    "screen",
    "snr_model",
    "standardize",
    "vqs_evolve",
]
