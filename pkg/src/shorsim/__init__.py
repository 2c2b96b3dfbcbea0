"""Exact perturbative simulation of Steane-code error correction with Shor-state ancillas.

Fidelities are returned as truncated polynomials in the Pauli error rates
``(p_x, p_y, p_z)``.
"""

from .circuit import Ancilla, Circuit, build_encoding_circuit, build_qec_circuit, build_shor_circuit
from .engine import accumulate_series, conditional_fidelity, density_oracle, run_pattern
from .experiments import (
    FidelityReport,
    compare_to_expected,
    encoding_experiment,
    load_expectations,
    mixed_noise_experiment,
    nonzero_syndrome_experiment,
    qec_experiment,
    shor_fidelity_experiment,
)
from .poly import TruncatedPoly, series_quotient

__all__ = [
    "Ancilla",
    "Circuit",
    "FidelityReport",
    "TruncatedPoly",
    "accumulate_series",
    "build_encoding_circuit",
    "build_qec_circuit",
    "build_shor_circuit",
    "compare_to_expected",
    "conditional_fidelity",
    "density_oracle",
    "encoding_experiment",
    "load_expectations",
    "mixed_noise_experiment",
    "nonzero_syndrome_experiment",
    "qec_experiment",
    "run_pattern",
    "series_quotient",
    "shor_fidelity_experiment",
]
