"""Fidelity measures as expectation values of fixed operators.

Each measure is linear in the output density operator, so it is stored as
a Hermitian matrix ``M`` with value ``<psi|M|psi>`` on an unnormalised pure
state and ``Tr(M rho)`` on a density matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import steane
from .circuit import GHZ_TARGET


@dataclass(frozen=True, eq=False)
class Functional:
    name: str
    operator: np.ndarray

    def __post_init__(self):
        self.operator.setflags(write=False)

    def on_state(self, vec: np.ndarray) -> float:
        return float(np.real(np.vdot(vec, self.operator @ vec)))

    def on_density(self, rho: np.ndarray) -> float:
        return float(np.real(np.trace(self.operator @ rho)))


def projector_functional(name: str, target: np.ndarray) -> Functional:
    t = np.asarray(target, dtype=complex)
    return Functional(name, np.outer(t, t.conj()))


def seven_qubit(target: np.ndarray) -> Functional:
    return projector_functional("seven_qubit", target)


def shor_state() -> Functional:
    return projector_functional("shor_state", GHZ_TARGET)


def decode_functional(target_qubit: np.ndarray, input_qubit: int = steane.DEFAULT_ENCODER_INPUT) -> Functional:
    """Noiseless decoding, trace over qubits 2..7, overlap with ``target_qubit``."""
    return Functional("one_qubit", steane.decode_operator(target_qubit, input_qubit))


def perfect_qec_functional(target: np.ndarray) -> Functional:
    return Functional("after_perfect_qec", steane.perfect_qec_operator(target))


def code_functionals(
    alpha: float, beta: float, input_qubit: int = steane.DEFAULT_ENCODER_INPUT, perfect_qec: bool = True
) -> list[Functional]:
    """Seven-qubit, decoded one-qubit and (optionally) after-perfect-QEC measures."""
    target = steane.logical_state(alpha, beta).vector
    out = [seven_qubit(target), decode_functional(steane.single_qubit_state(alpha, beta), input_qubit)]
    if perfect_qec:
        out.append(perfect_qec_functional(target))
    return out
