"""Circuit IR with Pauli fault locations, protocol builders and fault enumeration.

Qubits are 0-based internally and printed 1-based (``q1`` .. ``q12``).  The
QEC and encoding layouts put data on q1..q7, the four Shor ancillas on
q8..q11 and the verification qubit on q12.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from . import steane
from .poly import Monomial, TruncatedPoly, no_fault_power

PAULIS = ("X", "Y", "Z")
_EXP = {"X": (1, 0, 0), "Y": (0, 1, 0), "Z": (0, 0, 1), "I": (0, 0, 0)}

DATA = tuple(range(7))
SHOR = (7, 8, 9, 10)
CHECK = 11
SINGLE = 7

GHZ_TARGET = np.zeros(16, dtype=complex)
GHZ_TARGET[0] = GHZ_TARGET[15] = 1 / np.sqrt(2)


class CircuitError(ValueError):
    pass


# -- IR ---------------------------------------------------------------------

@dataclass(frozen=True)
class Step:
    op: str  # INIT, H, CNOT, MZ, MX, PAULI, MIX
    qubits: tuple[int, ...]
    noisy: bool = True
    postselect: int | None = None
    label: str | None = None
    group: str | None = None
    pauli: str | None = None

    @property
    def is_measurement(self) -> bool:
        return self.op in ("MZ", "MX")

    def dump(self) -> str:
        qs = " ".join(f"q{q + 1}" for q in self.qubits)
        if self.op == "PAULI":
            text = f"PAULI {self.pauli} {qs}"
        elif self.is_measurement:
            if self.postselect is not None:
                text = f"{self.op} {qs} postselect={self.postselect}"
            else:
                text = f"{self.op} {qs} record={self.label}"
        else:
            text = f"{self.op} {qs}"
        return text


@dataclass(frozen=True)
class Event:
    """One non-identity branch of a location's Pauli channel."""

    paulis: tuple[tuple[int, str], ...]  # (qubit, X|Y|Z), identities omitted
    exps: Monomial
    identity_factors: int  # channel factors left at p_0 within this location

    @property
    def degree(self) -> int:
        return sum(self.exps)


@dataclass(frozen=True)
class FaultLocation:
    id: int
    step: int
    kind: str  # "single", "pair" or "mixture"
    qubits: tuple[int, ...]
    events: tuple[Event, ...]

    @property
    def factors(self) -> int:
        """Independent single-qubit channel factors; 0 for the input mixture."""
        return {"single": 1, "pair": 2, "mixture": 0}[self.kind]


def _location_events(kind: str, qubits: tuple[int, ...]) -> tuple[Event, ...]:
    if kind == "single":
        (q,) = qubits
        return tuple(Event(((q, a),), _EXP[a], 0) for a in PAULIS)
    if kind == "pair":
        c, t = qubits
        out = []
        for a, b in itertools.product(("I",) + PAULIS, repeat=2):
            if a == b == "I":
                continue
            ps = tuple((q, p) for q, p in ((c, a), (t, b)) if p != "I")
            exps = tuple(x + y for x, y in zip(_EXP[a], _EXP[b]))
            out.append(Event(ps, exps, (a == "I") + (b == "I")))
        return tuple(out)
    if kind == "mixture":
        return tuple(Event(((q, a),), _EXP[a], 0) for q in qubits for a in PAULIS)
    raise CircuitError(f"unknown location kind {kind}")


@dataclass(frozen=True)
class Circuit:
    name: str
    register_size: int
    steps: tuple[Step, ...]
    outputs: tuple[int, ...]
    initial_state: np.ndarray | None = None  # amplitudes on ``outputs``
    parity_groups: tuple[tuple[str, int], ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        live = set()
        if self.initial_state is not None:
            live.update(self.outputs)
        for i, s in enumerate(self.steps):
            for q in s.qubits:
                if not 0 <= q < self.register_size:
                    raise CircuitError(f"step {i}: qubit {q} outside register")
            if s.op == "INIT":
                live.add(s.qubits[0])
            elif s.op == "MIX":
                if i != 0:
                    raise CircuitError("input error mixture must be the first step")
            else:
                dead = [q for q in s.qubits if q not in live]
                if dead:
                    raise CircuitError(f"step {i} ({s.dump()}) acts on dead qubits {dead}")
                if s.is_measurement:
                    live.discard(s.qubits[0])

    @cached_property
    def locations(self) -> tuple[FaultLocation, ...]:
        out = []
        for i, s in enumerate(self.steps):
            if not s.noisy:
                continue
            if s.op == "MIX":
                kind = "mixture"
            elif s.op == "CNOT":
                kind = "pair"
            else:
                kind = "single"
            out.append(FaultLocation(len(out), i, kind, s.qubits, _location_events(kind, s.qubits)))
        return tuple(out)

    @cached_property
    def measurements(self) -> tuple[int, ...]:
        """Step indices of all measurements, in time order."""
        return tuple(i for i, s in enumerate(self.steps) if s.is_measurement)

    @cached_property
    def noise_factors(self) -> int:
        return sum(loc.factors for loc in self.locations)

    @property
    def has_mixture(self) -> bool:
        return any(loc.kind == "mixture" for loc in self.locations)

    def dump(self) -> str:
        step_loc = {loc.step: loc.id for loc in self.locations}
        lines = []
        for i, s in enumerate(self.steps):
            text = s.dump()
            if i in step_loc:
                text += f"  # loc={step_loc[i]}"
            lines.append(text)
        return "\n".join(lines) + "\n"


# -- fault patterns ---------------------------------------------------------

@dataclass(frozen=True)
class FaultPattern:
    assignments: tuple[tuple[int, int], ...]  # (location id, event index)
    exps: Monomial
    mixture_hit: bool
    probability: TruncatedPoly

    @property
    def order(self) -> int:
        return len(self.assignments)

    @property
    def degree(self) -> int:
        return sum(self.exps)


def pattern_weight(circuit: Circuit, exps: Monomial, mixture_hit: bool, max_degree: int) -> TruncatedPoly:
    """Monomial times the no-fault weight of every channel factor not hit.

    Gate and initialisation/measurement channels contribute ``p_0`` per
    untouched single-qubit factor; the input mixture contributes
    ``1 - 7(p_x + p_y + p_z)`` when none of its 21 events is chosen.
    """
    gate_hits = sum(exps) - (1 if mixture_hit else 0)
    w = TruncatedPoly.monomial(exps, 1.0, max_degree)
    if sum(exps) > max_degree:
        return TruncatedPoly({}, max_degree)
    w = w * no_fault_power(circuit.noise_factors - gate_hits, max_degree)
    if circuit.has_mixture and not mixture_hit:
        s = sum(TruncatedPoly.variable(i, max_degree) for i in range(3))
        w = w * (1.0 - 7.0 * s)
    return w


def enumerate_fault_patterns(
    circuit: Circuit, max_order: int, max_degree: int | None = None
) -> Iterator[FaultPattern]:
    """Yield the empty pattern, then every choice of events at 1..K locations.

    With ``max_degree`` set, patterns whose monomial exceeds it are skipped;
    they vanish after truncation anyway.  Probabilities are truncated at
    ``max_degree`` (default ``max_order``).
    """
    if not 0 <= max_order <= 3:
        raise CircuitError("max_order must be in 0..3")
    k = max_order if max_degree is None else max_degree
    prune = max_degree is not None
    locs = circuit.locations
    cache: dict[tuple, TruncatedPoly] = {}

    def weight(exps, mix):
        key = (exps, mix)
        if key not in cache:
            cache[key] = pattern_weight(circuit, exps, mix, k)
        return cache[key]

    yield FaultPattern((), (0, 0, 0), False, weight((0, 0, 0), False))
    for order in range(1, max_order + 1):
        for combo in itertools.combinations(locs, order):
            for events in itertools.product(*(range(len(l.events)) for l in combo)):
                exps = [0, 0, 0]
                for loc, e in zip(combo, events):
                    ev = loc.events[e]
                    exps[0] += ev.exps[0]
                    exps[1] += ev.exps[1]
                    exps[2] += ev.exps[2]
                if prune and sum(exps) > k:
                    continue
                exps_t = tuple(exps)
                mix = any(l.kind == "mixture" for l in combo)
                yield FaultPattern(
                    tuple((l.id, e) for l, e in zip(combo, events)), exps_t, mix, weight(exps_t, mix)
                )


def count_patterns(circuit: Circuit, max_order: int, max_degree: int | None = None) -> int:
    """Number of patterns ``enumerate_fault_patterns`` yields, without building them."""
    top = 2 * max_order
    # ways[j][d]: choices of j locations whose events have total degree d
    ways = [[0] * (top + 1) for _ in range(max_order + 1)]
    ways[0][0] = 1
    for loc in circuit.locations:
        by_deg = [0, 0, 0]
        for ev in loc.events:
            by_deg[ev.degree] += 1
        for j in range(max_order - 1, -1, -1):
            for d in range(top - 1, -1, -1):
                if ways[j][d]:
                    for e in (1, 2):
                        if d + e <= top:
                            ways[j + 1][d + e] += ways[j][d] * by_deg[e]
    limit = top if max_degree is None else max_degree
    return sum(ways[j][d] for j in range(max_order + 1) for d in range(min(limit, top) + 1))


# -- ancilla kinds ----------------------------------------------------------

@dataclass(frozen=True)
class Ancilla:
    kind: str  # "shor" or "single"
    verifications: int = 1
    second_pair: tuple[int, int] = (1, 4)

    def __post_init__(self):
        if self.kind not in ("shor", "single"):
            raise CircuitError(f"unknown ancilla kind {self.kind}")
        if self.kind == "shor" and self.verifications not in (0, 1, 2):
            raise CircuitError("verifications must be 0, 1 or 2")

    @classmethod
    def parse(cls, text: str) -> "Ancilla":
        """``single``, ``shor0``, ``shor1``, ``shor2`` or ``shor2:2,3``."""
        if text == "single":
            return cls("single", 0)
        if text.startswith("shor"):
            body, _, pair = text[4:].partition(":")
            n = int(body) if body else 1
            if pair:
                a, b = (int(v) for v in pair.split(","))
                return cls("shor", n, (a, b))
            return cls("shor", n)
        raise CircuitError(f"cannot parse ancilla kind {text!r}")

    def __str__(self) -> str:
        if self.kind == "single":
            return "single"
        if self.verifications == 2 and self.second_pair != (1, 4):
            return f"shor2:{self.second_pair[0]},{self.second_pair[1]}"
        return f"shor{self.verifications}"


# -- fragment builders ------------------------------------------------------

def build_ghz_ancilla(
    n_verifications: int,
    second_pair: tuple[int, int] | None = None,
    noisy: bool = True,
    qubits: Sequence[int] = SHOR,
    check: int = CHECK,
    label: str = "",
) -> list[Step]:
    """Steps preparing ``(|0000> + |1111>)/sqrt(2)`` on ``qubits`` with parity checks.

    Verification j recomputes the parity of an ancilla pair onto ``check``
    (Shor qubits as controls) and postselects outcome 0.  The first pair is
    (1, 4); ``second_pair`` (1-based ancilla positions) defaults to (1, 4).
    """
    if n_verifications not in (0, 1, 2):
        raise CircuitError("n_verifications must be 0, 1 or 2")
    if second_pair is not None and n_verifications != 2:
        raise CircuitError("second_pair is only meaningful with two verifications")
    pair2 = second_pair or (1, 4)
    if len(set(pair2)) != 2 or not all(1 <= a <= 4 for a in pair2):
        raise CircuitError(f"invalid verification pair {pair2}")
    a = list(qubits)
    steps = [Step("INIT", (q,), noisy) for q in a]
    steps.append(Step("H", (a[0],), noisy))
    for i in range(3):
        steps.append(Step("CNOT", (a[i], a[i + 1]), noisy))
    for j, pair in enumerate([(1, 4), pair2][:n_verifications]):
        steps.append(Step("INIT", (check,), noisy))
        steps.append(Step("CNOT", (a[pair[0] - 1], check), noisy))
        steps.append(Step("CNOT", (a[pair[1] - 1], check), noisy))
        steps.append(Step("MZ", (check,), noisy, postselect=0, label=f"{label}v{j + 1}"))
    return steps


def _readout_strings(bit: int) -> tuple[int, int, int, int]:
    return (0, 0, 0, 0) if bit == 0 else (0, 0, 0, 1)


def build_syndrome_block(
    kind: str,
    stab_index: int,
    ancilla: Ancilla,
    noisy_ancilla: bool = True,
    noisy_coupling: bool = True,
    syndrome_bit: int = 0,
    readout: str = "exact",
    label: str = "",
    group: str | None = None,
) -> list[Step]:
    """One syndrome-bit measurement on the data block.

    ``kind`` is ``"bitflip"`` (Z-type generator) or ``"phaseflip"`` (X-type
    generator).  Shor ancillas are GHZ states; coupling CNOTs pair the
    support's data qubits in ascending order with ancillas 1..4.  Bit-flip
    blocks first rotate the GHZ state to a Shor state with four Hadamards,
    which count as error-correction noise (``noisy_coupling``).  Phase-flip
    blocks reverse the CNOTs (ancilla control) and read out in the X basis.
    With ``readout="exact"`` the four outcomes are postselected to the
    string 0000 (or 0001 for a 1 bit); with ``"parity"`` only their parity.
    """
    if kind not in ("bitflip", "phaseflip"):
        raise CircuitError(f"unknown syndrome kind {kind}")
    if stab_index not in (1, 2, 3):
        raise CircuitError(f"stabilizer index must be 1..3, got {stab_index}")
    if readout not in ("exact", "parity"):
        raise CircuitError(f"unknown readout mode {readout}")
    support = [q - 1 for q in steane.STABILIZER_SUPPORTS[stab_index - 1]]
    meas = "MZ" if kind == "bitflip" else "MX"
    steps: list[Step] = []
    if ancilla.kind == "shor":
        pair = ancilla.second_pair if ancilla.verifications == 2 else None
        steps += build_ghz_ancilla(ancilla.verifications, pair, noisy_ancilla, SHOR, CHECK, label)
        if kind == "bitflip":
            steps += [Step("H", (q,), noisy_coupling) for q in SHOR]
        for d, a in zip(support, SHOR):
            pair_q = (d, a) if kind == "bitflip" else (a, d)
            steps.append(Step("CNOT", pair_q, noisy_coupling))
        bits = _readout_strings(syndrome_bit)
        for i, (a, b) in enumerate(zip(SHOR, bits)):
            ps = b if readout == "exact" else None
            steps.append(Step(meas, (a,), noisy_coupling, ps, f"{label}b{i + 1}", group))
    else:
        steps.append(Step("INIT", (SINGLE,), noisy_ancilla))
        if kind == "phaseflip":
            steps.append(Step("H", (SINGLE,), noisy_ancilla))
        for d in support:
            pair_q = (d, SINGLE) if kind == "bitflip" else (SINGLE, d)
            steps.append(Step("CNOT", pair_q, noisy_coupling))
        steps.append(Step(meas, (SINGLE,), noisy_coupling, syndrome_bit, f"{label}b1", None))
    return steps


def _register(ancilla: Ancilla) -> int:
    if ancilla.kind == "single":
        return 8
    return 12 if ancilla.verifications else 11


def build_shor_circuit(n_verifications: int, second_pair: tuple[int, int] | None = None) -> Circuit:
    """Stand-alone Shor-state preparation on q1..q4 with check qubit q5."""
    steps = build_ghz_ancilla(n_verifications, second_pair, True, (0, 1, 2, 3), 4, "shor")
    return Circuit(
        f"shor{n_verifications}",
        5 if n_verifications else 4,
        tuple(steps),
        (0, 1, 2, 3),
        meta={"n_verifications": n_verifications, "second_pair": second_pair},
    )


def _schedule(order: Sequence[str]) -> list[tuple[str, int, int]]:
    # Each generator is measured twice in a row before moving to the next.
    return [(kind, s, r) for kind in order for s in (1, 2, 3) for r in (1, 2)]


def build_encoding_circuit(ancilla: Ancilla, readout: str = "exact") -> Circuit:
    """Noisy |0>^7 followed by each phase-flip generator measured twice."""
    steps = [Step("INIT", (q,), True) for q in DATA]
    groups = []
    for kind, s, r in _schedule(("phaseflip",)):
        label = f"p{s}r{r}"
        group = label if (readout == "parity" and ancilla.kind == "shor") else None
        steps += build_syndrome_block(kind, s, ancilla, True, True, 0, readout, label, group)
        if group:
            groups.append((group, 0))
    return Circuit(
        f"encoding-{ancilla}",
        _register(ancilla),
        tuple(steps),
        DATA,
        parity_groups=tuple(groups),
        meta={"ancilla": str(ancilla), "readout": readout},
    )


def build_qec_circuit(
    order_first: str,
    ancilla: Ancilla,
    alpha: float,
    beta: float,
    shor_noisy: bool = True,
    qec_noisy: bool = True,
    bit_syndrome: tuple[int, int, int] = (0, 0, 0),
    phase_syndrome: tuple[int, int, int] = (0, 0, 0),
    readout: str = "exact",
) -> Circuit:
    """Noisy error correction of ``rho_err`` built on the ideal encoded state.

    Syndromes are postselected to the given triples on both repeats and the
    matching noisy recovery Paulis are appended when a triple is nonzero.
    """
    if order_first not in ("bit", "phase"):
        raise CircuitError("order_first must be 'bit' or 'phase'")
    for s in (*bit_syndrome, *phase_syndrome):
        if s not in (0, 1):
            raise CircuitError(f"invalid syndrome triple {bit_syndrome} / {phase_syndrome}")
    order = ("bitflip", "phaseflip") if order_first == "bit" else ("phaseflip", "bitflip")
    steps = [Step("MIX", DATA, True)]
    groups = []
    for kind, s, r in _schedule(order):
        bit = (bit_syndrome if kind == "bitflip" else phase_syndrome)[s - 1]
        label = f"{kind[0]}{s}r{r}"
        group = label if (readout == "parity" and ancilla.kind == "shor") else None
        steps += build_syndrome_block(kind, s, ancilla, shor_noisy, qec_noisy, bit, readout, label, group)
        if group:
            groups.append((group, bit))
    for q, p in steane.syndrome_to_recovery(bit_syndrome, phase_syndrome):
        steps.append(Step("PAULI", (q - 1,), qec_noisy, pauli=p))
    return Circuit(
        f"qec-{order_first}-{ancilla}",
        _register(ancilla),
        tuple(steps),
        DATA,
        initial_state=steane.logical_state(alpha, beta).vector.copy(),
        parity_groups=tuple(groups),
        meta={
            "order_first": order_first,
            "ancilla": str(ancilla),
            "alpha": alpha,
            "beta": beta,
            "shor_noisy": shor_noisy,
            "qec_noisy": qec_noisy,
            "bit_syndrome": tuple(bit_syndrome),
            "phase_syndrome": tuple(phase_syndrome),
            "readout": readout,
        },
    )
