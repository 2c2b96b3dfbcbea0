import itertools

import numpy as np
import pytest

from shorsim import steane

TARGET = steane.logical_state(0.4, 1.1).vector


def test_codewords():
    even, odd = steane.even_codewords(), steane.odd_codewords()
    assert len(even) == len(odd) == 8
    assert all(sum(w) % 2 == 0 for w in even)
    assert all(sum(w) % 2 == 1 for w in odd)


def test_logical_state_is_stabilized():
    for supp in steane.STABILIZER_SUPPORTS:
        m = sum(1 << (7 - q) for q in supp)
        for xm, zm in ((m, 0), (0, m)):
            assert np.allclose(steane.apply_pauli(TARGET, xm, zm), TARGET)
    assert np.linalg.norm(TARGET) == pytest.approx(1.0)


def test_projector_completeness():
    projs = steane.syndrome_projectors()
    assert len(projs) == 64
    total = sum(projs.values())
    assert np.max(np.abs(total - np.eye(128))) < 1e-12
    for p in list(projs.values())[:8]:
        assert np.max(np.abs(p @ p - p)) < 1e-12
        assert np.trace(p).real == pytest.approx(2.0)


@pytest.mark.parametrize("q,kind", list(itertools.product(range(1, 8), "XYZ")))
def test_single_errors_corrected(q, kind):
    phi = steane.apply_pauli(TARGET, *steane.single_pauli(q, kind))
    assert abs(steane.perfect_qec_value(phi, TARGET) - 1.0) < 1e-12
    m = steane.perfect_qec_operator(TARGET)
    assert abs(np.vdot(phi, m @ phi).real - 1.0) < 1e-12


def test_weight_two_x_error_fails():
    zero = steane.logical_state(0.0).vector
    x3, _ = steane.single_pauli(3, "X")
    x5, _ = steane.single_pauli(5, "X")
    phi = steane.apply_pauli(zero, x3 | x5, 0)
    assert steane.perfect_qec_value(phi, zero) == pytest.approx(0.0, abs=1e-12)


def test_syndrome_names_qubit():
    assert steane.syndrome_to_recovery((0, 0, 1), (0, 0, 0)) == [(4, "X")]
    assert steane.syndrome_to_recovery((1, 1, 0), (1, 1, 0)) == [(3, "Y")]
    assert steane.syndrome_to_recovery((0, 0, 0), (0, 0, 0)) == []
    for q in range(1, 8):
        bits, phase = steane.syndrome_of(*steane.single_pauli(q, "X"))
        assert phase == (0, 0, 0)
        assert bits[0] + 2 * bits[1] + 4 * bits[2] == q


def test_bad_syndrome_bit():
    with pytest.raises(ValueError):
        steane.syndrome_to_recovery((0, 2, 0), (0, 0, 0))


@pytest.mark.parametrize("q", [3, 5, 6])
def test_encoder_round_trip(q):
    psi = steane.single_qubit_state(0.3, 0.7)
    enc = steane.encode(psi, q)
    assert abs(np.vdot(steane.logical_state(0.3, 0.7).vector, enc)) == pytest.approx(1.0)
    assert steane.decoded_fidelity(enc, psi, q) == pytest.approx(1.0)


def test_decoder_is_unitary():
    u = steane.decoder_unitary()
    assert np.allclose(u.conj().T @ u, np.eye(128))


def test_decoded_fidelity_of_orthogonal_state():
    psi = steane.single_qubit_state(0.0)
    one = steane.logical_state(np.pi / 2).vector
    assert steane.decoded_fidelity(one, psi) == pytest.approx(0.0, abs=1e-12)
