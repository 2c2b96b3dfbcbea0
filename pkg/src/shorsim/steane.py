"""[[7,1,3]] Steane code assets.

Qubits are labelled 1..7 in every public function of this module; arrays
use axis ``q - 1``.  State vectors are flattened in C order, so qubit 1 is
the most significant bit of the basis index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

N_DATA = 7

# X- and Z-type generators share these supports.  Row order and bit
# significance make syndrome (s1, s2, s3) name qubit s1 + 2 s2 + 4 s3.
STABILIZER_SUPPORTS: tuple[tuple[int, ...], ...] = ((1, 3, 5, 7), (2, 3, 6, 7), (4, 5, 6, 7))
LOGICAL_SUPPORT: tuple[int, ...] = (1, 2, 3)

# Qubit that holds the first stabilizer's X generator alone, per row.
_PIVOTS = (1, 2, 4)

DEFAULT_ENCODER_INPUT = 3


def _mask(support) -> int:
    """Bitmask with qubit q at bit (7 - q), matching the flattened index."""
    m = 0
    for q in support:
        m |= 1 << (N_DATA - q)
    return m


def even_codewords() -> list[tuple[int, ...]]:
    """The 8 bit strings spanned by the stabilizer supports."""
    words = set()
    for coeffs in itertools.product((0, 1), repeat=3):
        w = [0] * N_DATA
        for c, support in zip(coeffs, STABILIZER_SUPPORTS):
            if c:
                for q in support:
                    w[q - 1] ^= 1
        words.add(tuple(w))
    return sorted(words)


def odd_codewords() -> list[tuple[int, ...]]:
    flip = [1 if q in LOGICAL_SUPPORT else 0 for q in range(1, N_DATA + 1)]
    return sorted(tuple(a ^ b for a, b in zip(w, flip)) for w in even_codewords())


def _index(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


@dataclass(frozen=True)
class LogicalState:
    alpha: float
    beta: float
    vector: np.ndarray

    def __post_init__(self):
        self.vector.setflags(write=False)


def logical_state(alpha: float, beta: float = 0.0) -> LogicalState:
    """``cos(alpha)|0_L> + exp(i beta) sin(alpha)|1_L>`` as a 128-vector."""
    vec = np.zeros(2**N_DATA, dtype=complex)
    amp = 1.0 / np.sqrt(8.0)
    for w in even_codewords():
        vec[_index(w)] += np.cos(alpha) * amp
    for w in odd_codewords():
        vec[_index(w)] += np.exp(1j * beta) * np.sin(alpha) * amp
    return LogicalState(float(alpha), float(beta), vec)


def single_qubit_state(alpha: float, beta: float = 0.0) -> np.ndarray:
    return np.array([np.cos(alpha), np.exp(1j * beta) * np.sin(alpha)], dtype=complex)


# -- Pauli strings on the data block ------------------------------------

def pauli_matrix_on_data(xmask: int, zmask: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (permutation, phase) such that ``(P psi)[perm[i]] = phase[i] psi[i]``.

    ``P = prod_q X_q^{x_q} Z_q^{z_q}`` in the X-after-Z order; global phases
    are irrelevant for every quantity in this package.
    """
    idx = np.arange(2**N_DATA)
    parity = np.array([bin(i & zmask).count("1") & 1 for i in idx])
    return idx ^ xmask, np.where(parity, -1.0, 1.0)


def apply_pauli(vec: np.ndarray, xmask: int, zmask: int) -> np.ndarray:
    perm, phase = pauli_matrix_on_data(xmask, zmask)
    out = np.empty_like(vec)
    out[perm] = phase * vec
    return out


def pauli_operator(xmask: int, zmask: int) -> np.ndarray:
    perm, phase = pauli_matrix_on_data(xmask, zmask)
    mat = np.zeros((2**N_DATA, 2**N_DATA), dtype=complex)
    mat[perm, np.arange(2**N_DATA)] = phase
    return mat


def single_pauli(q: int, kind: str) -> tuple[int, int]:
    bit = 1 << (N_DATA - q)
    return {"I": (0, 0), "X": (bit, 0), "Y": (bit, bit), "Z": (0, bit)}[kind]


def syndrome_to_recovery(bit_syndrome, phase_syndrome) -> list[tuple[int, str]]:
    """Recovery Paulis as ``[(qubit, kind), ...]``; empty for trivial syndromes.

    A bit-flip triple names the qubit to flip with X, a phase-flip triple the
    qubit to flip with Z; the same qubit may receive both (a Y recovery).
    """
    for s in (*bit_syndrome, *phase_syndrome):
        if s not in (0, 1):
            raise ValueError(f"syndrome bits must be 0 or 1, got {s}")
    qx = bit_syndrome[0] + 2 * bit_syndrome[1] + 4 * bit_syndrome[2]
    qz = phase_syndrome[0] + 2 * phase_syndrome[1] + 4 * phase_syndrome[2]
    out = []
    if qx and qx == qz:
        return [(qx, "Y")]
    if qx:
        out.append((qx, "X"))
    if qz:
        out.append((qz, "Z"))
    return out


def recovery_masks(bit_syndrome, phase_syndrome) -> tuple[int, int]:
    xm = zm = 0
    for q, kind in syndrome_to_recovery(bit_syndrome, phase_syndrome):
        x, z = single_pauli(q, kind)
        xm |= x
        zm |= z
    return xm, zm


def syndrome_of(xmask: int, zmask: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(bit-flip syndrome, phase-flip syndrome) of a data Pauli string."""
    bit = tuple(bin(xmask & _mask(r)).count("1") & 1 for r in STABILIZER_SUPPORTS)
    phase = tuple(bin(zmask & _mask(r)).count("1") & 1 for r in STABILIZER_SUPPORTS)
    return bit, phase


@lru_cache(maxsize=None)
def syndrome_projectors() -> dict[tuple[tuple[int, ...], tuple[int, ...]], np.ndarray]:
    """The 64 joint eigenspace projectors, as diagonal-in-a-basis dense matrices."""
    dim = 2**N_DATA
    eye = np.eye(dim, dtype=complex)
    gens_x = [pauli_operator(_mask(r), 0) for r in STABILIZER_SUPPORTS]
    gens_z = [pauli_operator(0, _mask(r)) for r in STABILIZER_SUPPORTS]
    out = {}
    for bits in itertools.product((0, 1), repeat=6):
        proj = eye
        # Z-type generators detect bit flips; X-type generators detect phase flips.
        for b, g in zip(bits[:3], gens_z):
            proj = proj @ (eye + (-1) ** b * g) / 2
        for b, g in zip(bits[3:], gens_x):
            proj = proj @ (eye + (-1) ** b * g) / 2
        out[(bits[:3], bits[3:])] = proj
    return out


def perfect_qec_operator(target: np.ndarray) -> np.ndarray:
    """Operator M with ``<phi|M|phi> = sum_s |<target| R_s P_s |phi>|^2``."""
    dim = 2**N_DATA
    proj_t = np.outer(target, target.conj())
    m = np.zeros((dim, dim), dtype=complex)
    for (bs, ps), proj in syndrome_projectors().items():
        r = pauli_operator(*recovery_masks(bs, ps))
        a = r @ proj
        m += a.conj().T @ proj_t @ a
    return m


def perfect_qec_value(phi: np.ndarray, target: np.ndarray) -> float:
    total = 0.0
    for (bs, ps), proj in syndrome_projectors().items():
        out = apply_pauli(proj @ phi, *recovery_masks(bs, ps))
        total += abs(np.vdot(target, out)) ** 2
    return float(total)


# -- encoder / decoder -------------------------------------------------

def encoder_gates(input_qubit: int = DEFAULT_ENCODER_INPUT) -> list[tuple]:
    """Noiseless encoder taking ``|psi>|0>^6`` (psi on qubit 1) to the code.

    The input is moved to ``input_qubit`` (which must be 3, 5 or 6), spread
    over a weight-3 logical X support, and the three X generators are then
    created from the pivots 1, 2 and 4.  Gates are ``("H", q)`` or
    ``("CNOT", c, t)``.
    """
    if input_qubit not in (3, 5, 6):
        raise ValueError("encoder input qubit must be one of 3, 5, 6")
    # Full SWAP so the encoded images of X_1 and Z_1 stay single-type.
    gates: list[tuple] = [("CNOT", 1, input_qubit), ("CNOT", input_qubit, 1), ("CNOT", 1, input_qubit)]
    x_support = _logical_x_support(input_qubit)
    for t in x_support:
        if t != input_qubit:
            gates.append(("CNOT", input_qubit, t))
    for pivot, support in zip(_PIVOTS, STABILIZER_SUPPORTS):
        gates.append(("H", pivot))
        for t in support:
            if t != pivot:
                gates.append(("CNOT", pivot, t))
    return gates


def decoder_gates(input_qubit: int = DEFAULT_ENCODER_INPUT) -> list[tuple]:
    return list(reversed(encoder_gates(input_qubit)))


def _logical_x_support(input_qubit: int) -> tuple[int, ...]:
    # The only weight-3 logical X support avoiding all pivots.
    return (3, 5, 6)


def encoder_representatives(input_qubit: int = DEFAULT_ENCODER_INPUT) -> dict[str, tuple[int, ...]]:
    """Supports of the encoded images of X and Z on the input qubit."""
    z_support = {input_qubit}
    for pivot, support in zip(_PIVOTS, STABILIZER_SUPPORTS):
        if input_qubit in support:
            z_support.add(pivot)
    return {"X": _logical_x_support(input_qubit), "Z": tuple(sorted(z_support))}


def _apply_gate(vec: np.ndarray, gate: tuple, n: int) -> np.ndarray:
    psi = vec.reshape((2,) * n)
    if gate[0] == "H":
        q = gate[1] - 1
        a = np.take(psi, 0, axis=q)
        b = np.take(psi, 1, axis=q)
        psi = np.stack([(a + b) / np.sqrt(2), (a - b) / np.sqrt(2)], axis=q)
    else:
        c, t = gate[1] - 1, gate[2] - 1
        psi = psi.copy()
        idx = [slice(None)] * n
        idx[c] = 1
        sub = psi[tuple(idx)]
        psi[tuple(idx)] = np.flip(sub, axis=t if t < c else t - 1).copy()
    return psi.reshape(-1)


def run_gates(vec: np.ndarray, gates, n: int = N_DATA) -> np.ndarray:
    for g in gates:
        vec = _apply_gate(vec, g, n)
    return vec


@lru_cache(maxsize=None)
def decoder_unitary(input_qubit: int = DEFAULT_ENCODER_INPUT) -> np.ndarray:
    dim = 2**N_DATA
    cols = [run_gates(np.eye(dim, dtype=complex)[:, i], decoder_gates(input_qubit)) for i in range(dim)]
    return np.array(cols).T


def encode(qubit_state: np.ndarray, input_qubit: int = DEFAULT_ENCODER_INPUT) -> np.ndarray:
    vec = np.zeros(2**N_DATA, dtype=complex)
    vec[0] = qubit_state[0]
    vec[1 << (N_DATA - 1)] = qubit_state[1]
    return run_gates(vec, encoder_gates(input_qubit))


def decode_operator(target: np.ndarray, input_qubit: int = DEFAULT_ENCODER_INPUT) -> np.ndarray:
    """M with ``<phi|M|phi> = <t| Tr_{2..7}(D phi phi^dag D^dag) |t>``."""
    d = decoder_unitary(input_qubit)
    t = np.asarray(target, dtype=complex)
    proj = np.kron(np.outer(t, t.conj()), np.eye(2 ** (N_DATA - 1)))
    return d.conj().T @ proj @ d


def decoded_fidelity(phi: np.ndarray, target: np.ndarray, input_qubit: int = DEFAULT_ENCODER_INPUT) -> float:
    """Decode, trace out qubits 2..7, return ``<t|rho_1|t>`` (unnormalised phi allowed)."""
    out = run_gates(np.asarray(phi, dtype=complex), decoder_gates(input_qubit)).reshape(2, -1)
    rho1 = out @ out.conj().T
    t = np.asarray(target, dtype=complex)
    return float(np.real(t.conj() @ rho1 @ t))
