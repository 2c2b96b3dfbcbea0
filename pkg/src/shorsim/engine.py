"""Exact per-pattern simulation and perturbative series accumulation.

Two independent routes evaluate a fault pattern:

* the state-vector runner inserts the pattern's Paulis into a dense
  simulation of the whole circuit (the reference path);
* the Pauli-frame path pushes each fault to the end of the circuit once,
  turning a pattern into a set of flipped measurement outcomes plus a
  residual Pauli on the outputs, and reuses a handful of fault-free
  branches.

:func:`density_oracle` is a third, non-perturbative check that evolves the
full density matrix at numeric rates.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .circuit import Circuit, CircuitError, FaultPattern, pattern_weight
from .functionals import Functional
from .poly import TruncatedPoly, series_quotient

SQRT_HALF = 1.0 / np.sqrt(2.0)
ZERO_NORM = 1e-28
MERGE_TOL = 1e-10
WORKERS_ENV = "SHORSIM_WORKERS"

Progress = Callable[[int, int], None]


class UnsupportedStepError(CircuitError):
    pass


class UndefinedConditionalError(ZeroDivisionError):
    pass


# -- state vectors ----------------------------------------------------------

def _index_table(n: int) -> list[tuple[tuple, tuple]]:
    table = []
    for q in range(n):
        lo = tuple(0 if i == q else slice(None) for i in range(n))
        hi = tuple(1 if i == q else slice(None) for i in range(n))
        table.append((lo, hi))
    return table


class StateVectorRunner:
    """Dense simulation of a circuit with optional Pauli insertions.

    Measurements project onto the accepted outcome without renormalising and
    return the qubit to |0>.  Parity-conditioned readout groups branch on
    every outcome; branches are merged when they coincide up to phase.
    """

    def __init__(self, circuit: Circuit):
        if list(circuit.outputs) != sorted(circuit.outputs):
            raise CircuitError("circuit outputs must be in ascending order")
        self.circuit = circuit
        self.n = circuit.register_size
        self._ix = _index_table(self.n)
        self._meas_ordinal = {s: i for i, s in enumerate(circuit.measurements)}
        self._group_req = dict(circuit.parity_groups)
        last: dict[str, int] = {}
        for i, s in enumerate(circuit.steps):
            if s.is_measurement and s.group is not None:
                last[s.group] = i
        self._group_close = {i: g for g, i in last.items()}
        out = [slice(None) if q in circuit.outputs else 0 for q in range(self.n)]
        self._out_index = tuple(out)

    def initial(self) -> np.ndarray:
        psi = np.zeros((2,) * self.n, dtype=complex)
        if self.circuit.initial_state is None:
            psi[(0,) * self.n] = 1.0
        else:
            k = len(self.circuit.outputs)
            psi[self._out_index] = self.circuit.initial_state.reshape((2,) * k)
        return psi

    # single-qubit primitives act in place
    def _x(self, psi, q):
        lo, hi = self._ix[q]
        tmp = psi[lo].copy()
        psi[lo] = psi[hi]
        psi[hi] = tmp

    def _z(self, psi, q):
        psi[self._ix[q][1]] *= -1.0

    def _h(self, psi, q):
        lo, hi = self._ix[q]
        a = psi[lo].copy()
        b = psi[hi]
        psi[lo] = (a + b) * SQRT_HALF
        psi[hi] = (a - b) * SQRT_HALF

    def _cnot(self, psi, c, t):
        lo, hi = self._cnot_ix(c, t)
        sub = psi[self._ix[c][1]]
        tmp = sub[lo].copy()
        sub[lo] = sub[hi]
        sub[hi] = tmp

    @lru_cache(maxsize=None)
    def _cnot_ix(self, c, t):
        axis = t if t < c else t - 1
        lo = tuple(0 if i == axis else slice(None) for i in range(self.n - 1))
        hi = tuple(1 if i == axis else slice(None) for i in range(self.n - 1))
        return lo, hi

    def _pauli(self, psi, q, p):
        if p == "X":
            self._x(psi, q)
        elif p == "Z":
            self._z(psi, q)
        elif p == "Y":
            self._z(psi, q)
            self._x(psi, q)

    def _project(self, psi, q, m):
        lo, hi = self._ix[q]
        if m == 0:
            psi[hi] = 0.0
        else:
            psi[lo] = psi[hi]
            psi[hi] = 0.0

    def advance(self, ensemble, start: int, stop: int, flips: int = 0, inserts=None):
        """Evolve ``ensemble`` (mutated in place) through steps ``start..stop-1``."""
        inserts = inserts or {}
        for i in range(start, stop):
            step = self.circuit.steps[i]
            ins = inserts.get(i, ())
            if not step.is_measurement:
                op = step.op
                for psi, _ in ensemble:
                    if op == "H":
                        self._h(psi, step.qubits[0])
                    elif op == "CNOT":
                        self._cnot(psi, *step.qubits)
                    elif op == "PAULI":
                        self._pauli(psi, step.qubits[0], step.pauli)
                    elif op not in ("INIT", "MIX"):
                        raise UnsupportedStepError(f"unsupported op {op}")
                    for q, p in ins:
                        self._pauli(psi, q, p)
                continue
            q = step.qubits[0]
            flip = (flips >> self._meas_ordinal[i]) & 1
            new_ensemble = []
            for psi, par in ensemble:
                for qq, p in ins:
                    self._pauli(psi, qq, p)
                if step.op == "MX":
                    self._h(psi, q)
                if step.postselect is not None:
                    self._project(psi, q, step.postselect ^ flip)
                    new_ensemble.append((psi, par))
                else:
                    for m in (0, 1):
                        branch = psi.copy() if m == 0 else psi
                        self._project(branch, q, m)
                        p2 = dict(par)
                        p2[step.group] = p2.get(step.group, 0) ^ m ^ flip
                        new_ensemble.append((branch, p2))
            if i in self._group_close:
                g = self._group_close[i]
                new_ensemble = _merge([(psi, par) for psi, par in new_ensemble if par.get(g, 0) == self._group_req[g]])
            ensemble = [(psi, par) for psi, par in new_ensemble if _norm2(psi) > ZERO_NORM]
            if not ensemble:
                return []
        return ensemble

    def outputs_of(self, ensemble) -> list[np.ndarray]:
        return [psi[self._out_index].reshape(-1).copy() for psi, _ in ensemble]

    def run(self, inserts: dict[int, Sequence[tuple[int, str]]] | None = None, flips: int = 0) -> list[np.ndarray]:
        """Final (unnormalised) output vectors of every surviving branch.

        ``inserts`` maps a step index to Paulis applied after the step (before
        it, for measurements).  ``flips`` toggles the accepted outcome of the
        measurements whose time-ordinal bit is set.
        """
        ensemble = [(self.initial(), {})]
        return self.outputs_of(self.advance(ensemble, 0, len(self.circuit.steps), flips, inserts))

    def run_many(self, keys: Iterable[int]) -> dict[int, list[np.ndarray]]:
        """Fault-free runs for many flip masks, sharing common prefixes."""
        meas = self.circuit.measurements
        end = len(self.circuit.steps)
        tails = sorted({tuple(j for j in range(len(meas)) if (k >> j) & 1) for k in keys})
        out: dict[int, list[np.ndarray]] = {}

        def key_of(bits):
            return sum(1 << j for j in bits)

        def solve(ensemble, pos, done, group):
            # ensemble sits just before step ``pos``; ``done`` are bits already applied.
            # ``group`` holds the remaining bits of each key, sorted.
            cur, cur_pos = ensemble, pos
            by_first: dict[int, list] = {}
            finish = False
            for rest in group:
                if rest:
                    by_first.setdefault(rest[0], []).append(rest[1:])
                else:
                    finish = True
            base = key_of(done)
            for b in sorted(by_first):
                target = meas[b]
                if cur:
                    cur = self.advance(cur, cur_pos, target, base)
                cur_pos = target
                sub = [(psi.copy(), dict(par)) for psi, par in cur]
                if sub:
                    sub = self.advance(sub, target, target + 1, base | (1 << b))
                solve(sub, target + 1, done + (b,), by_first[b])
            if finish:
                if cur:
                    cur = self.advance(cur, cur_pos, end, base)
                out[base] = self.outputs_of(cur)

        solve([(self.initial(), {})], 0, (), tails)
        return out


def _norm2(psi: np.ndarray) -> float:
    return float(np.vdot(psi, psi).real)


def _merge(ensemble: list[tuple[np.ndarray, dict]]) -> list[tuple[np.ndarray, dict]]:
    """Combine branches that are equal up to a phase (mixture of equal pure states)."""
    kept: list[list] = []
    for psi, par in ensemble:
        n2 = _norm2(psi)
        if n2 <= ZERO_NORM:
            continue
        for entry in kept:
            other, on2 = entry[0], entry[1]
            ov = abs(np.vdot(other, psi)) ** 2
            if ov >= (1.0 - MERGE_TOL) * on2 * n2:
                entry[0] = other * np.sqrt((on2 + n2) / on2)
                entry[1] = on2 + n2
                break
        else:
            kept.append([psi, n2, par])
    return [(e[0], {k: v for k, v in e[2].items()}) for e in kept]


@dataclass(frozen=True)
class PatternResult:
    weight: float
    values: dict[str, float]


def _pattern_inserts(circuit: Circuit, pattern: FaultPattern) -> dict[int, list[tuple[int, str]]]:
    locs = circuit.locations
    inserts: dict[int, list[tuple[int, str]]] = {}
    for loc_id, ev in pattern.assignments:
        loc = locs[loc_id]
        inserts.setdefault(loc.step, []).extend(loc.events[ev].paulis)
    return inserts


def _evaluate_branches(branches: Sequence[np.ndarray], functionals: Sequence[Functional]) -> tuple[float, tuple[float, ...]]:
    weight = sum(_norm2(v) for v in branches)
    values = tuple(sum(f.on_state(v) for v in branches) for f in functionals)
    return weight, values


def run_pattern(
    circuit: Circuit, pattern: FaultPattern, functionals: Sequence[Functional] = (), runner: StateVectorRunner | None = None
) -> PatternResult:
    """Acceptance weight and weight-scaled functional values of one pattern."""
    runner = runner or StateVectorRunner(circuit)
    branches = runner.run(_pattern_inserts(circuit, pattern))
    weight, values = _evaluate_branches(branches, functionals)
    return PatternResult(weight, {f.name: v for f, v in zip(functionals, values)})


# -- Pauli frames -----------------------------------------------------------

def _bit_parity(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a) & 1


@lru_cache(maxsize=4096)
def _pauli_action(xmask: int, zmask: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(2**n)
    return idx ^ xmask, np.where(_bit_parity(idx & zmask), -1.0, 1.0)


def apply_output_pauli(vec: np.ndarray, xmask: int, zmask: int, n: int) -> np.ndarray:
    if not xmask and not zmask:
        return vec
    perm, phase = _pauli_action(xmask, zmask, n)
    out = np.empty_like(vec)
    out[perm] = phase * vec
    return out


@dataclass(frozen=True)
class FrameEffect:
    flips: int  # bit j set: measurement with time-ordinal j flipped
    xmask: int  # residual X part on the outputs (output i at bit n_out - 1 - i)
    zmask: int

    def __xor__(self, other: "FrameEffect") -> "FrameEffect":
        return FrameEffect(self.flips ^ other.flips, self.xmask ^ other.xmask, self.zmask ^ other.zmask)


class PauliFrame:
    """Pauli-frame propagation plus cached fault-free branches of a circuit."""

    def __init__(self, circuit: Circuit, runner: StateVectorRunner | None = None):
        self.circuit = circuit
        self.runner = runner or StateVectorRunner(circuit)
        self.n_out = len(circuit.outputs)
        self._meas_ordinal = {s: i for i, s in enumerate(circuit.measurements)}
        for s in circuit.steps:
            if s.op not in ("INIT", "H", "CNOT", "MZ", "MX", "PAULI", "MIX"):
                raise UnsupportedStepError(f"non-Clifford step {s.op}")
        exact = 0
        self._group_masks: list[tuple[int, int]] = []
        groups: dict[str, list[int]] = {}
        for i in circuit.measurements:
            s = circuit.steps[i]
            if s.postselect is not None:
                exact |= 1 << self._meas_ordinal[i]
            else:
                groups.setdefault(s.group, []).append(self._meas_ordinal[i])
        for g, ords in groups.items():
            mask = 0
            for o in ords:
                mask |= 1 << o
            self._group_masks.append((mask, 1 << min(ords)))
        self._exact_mask = exact
        self._branches: dict[int, list[np.ndarray]] = {}
        self._values: dict[tuple[int, int, int], tuple[float, tuple[float, ...]]] = {}
        self._effects: dict[tuple[int, int], FrameEffect] = {}

    # propagation
    def propagate(self, paulis: Iterable[tuple[int, str]], start: int) -> FrameEffect:
        """Push Paulis inserted at step ``start`` to the end of the circuit."""
        x = z = 0
        for q, p in paulis:
            if p in ("X", "Y"):
                x ^= 1 << q
            if p in ("Z", "Y"):
                z ^= 1 << q
        steps = self.circuit.steps
        first = steps[start]
        i0 = start if first.is_measurement else start + 1
        flips = 0
        for i in range(i0, len(steps)):
            s = steps[i]
            op = s.op
            if op == "H":
                q = s.qubits[0]
                bx, bz = (x >> q) & 1, (z >> q) & 1
                if bx != bz:
                    x ^= 1 << q
                    z ^= 1 << q
            elif op == "CNOT":
                c, t = s.qubits
                if (x >> c) & 1:
                    x ^= 1 << t
                if (z >> t) & 1:
                    z ^= 1 << c
            elif op in ("MZ", "MX"):
                q = s.qubits[0]
                hit = (x >> q) & 1 if op == "MZ" else (z >> q) & 1
                if hit:
                    flips ^= 1 << self._meas_ordinal[i]
                x &= ~(1 << q)
                z &= ~(1 << q)
        ox = oz = 0
        for i, q in enumerate(self.circuit.outputs):
            bit = 1 << (self.n_out - 1 - i)
            if (x >> q) & 1:
                ox |= bit
            if (z >> q) & 1:
                oz |= bit
        return FrameEffect(flips, ox, oz)

    def event_effect(self, loc_id: int, event: int) -> FrameEffect:
        key = (loc_id, event)
        eff = self._effects.get(key)
        if eff is None:
            loc = self.circuit.locations[loc_id]
            eff = self.propagate(loc.events[event].paulis, loc.step)
            self._effects[key] = eff
        return eff

    def pattern_effect(self, pattern: FaultPattern) -> FrameEffect:
        eff = FrameEffect(0, 0, 0)
        for loc_id, ev in pattern.assignments:
            eff = eff ^ self.event_effect(loc_id, ev)
        return eff

    def canonical_flips(self, flips: int) -> int:
        """Reduce flips on parity-conditioned groups to one bit per group."""
        out = flips & self._exact_mask
        for mask, first in self._group_masks:
            if bin(flips & mask).count("1") & 1:
                out |= first
        return out

    # branch evaluation
    def prepare(self, flips: Iterable[int]) -> None:
        """Simulate all missing fault-free branches in one prefix-sharing pass."""
        keys = {self.canonical_flips(f) for f in flips} - self._branches.keys()
        if keys:
            self._branches.update(self.runner.run_many(keys))

    def branch(self, flips: int) -> list[np.ndarray]:
        key = self.canonical_flips(flips)
        got = self._branches.get(key)
        if got is None:
            got = self.runner.run(None, key)
            self._branches[key] = got
        return got

    def evaluate(self, effect: FrameEffect, functionals: Sequence[Functional]) -> tuple[float, tuple[float, ...]]:
        key = (self.canonical_flips(effect.flips), effect.xmask, effect.zmask)
        got = self._values.get(key)
        if got is None:
            branches = [apply_output_pauli(v, effect.xmask, effect.zmask, self.n_out) for v in self.branch(key[0])]
            got = _evaluate_branches(branches, functionals)
            self._values[key] = got
        return got


def pauli_frame_propagate(circuit: Circuit, pattern: FaultPattern) -> tuple[str, frozenset[str]]:
    """Residual Pauli string on the outputs and the labels of flipped measurements."""
    frame = PauliFrame(circuit)
    eff = frame.pattern_effect(pattern)
    chars = []
    for i in range(frame.n_out):
        bit = 1 << (frame.n_out - 1 - i)
        chars.append("IXZY"[bool(eff.xmask & bit) + 2 * bool(eff.zmask & bit)])
    labels = set()
    for ordinal, step_index in enumerate(circuit.measurements):
        if (eff.flips >> ordinal) & 1:
            s = circuit.steps[step_index]
            labels.add(s.label or f"m{ordinal}")
    return "".join(chars), frozenset(labels)


def run_pattern_frame(
    circuit: Circuit, pattern: FaultPattern, functionals: Sequence[Functional] = (), frame: PauliFrame | None = None
) -> PatternResult:
    frame = frame or PauliFrame(circuit)
    weight, values = frame.evaluate(frame.pattern_effect(pattern), functionals)
    return PatternResult(weight, {f.name: v for f, v in zip(functionals, values)})


# -- series accumulation ----------------------------------------------------

@dataclass(frozen=True)
class SeriesPair:
    numerator: TruncatedPoly
    denominator: TruncatedPoly


@dataclass
class SeriesResult:
    denominator: TruncatedPoly
    numerators: dict[str, TruncatedPoly]
    max_order: int
    patterns: int
    path: str
    meta: dict = field(default_factory=dict)

    def pair(self, name: str) -> SeriesPair:
        return SeriesPair(self.numerators[name], self.denominator)

    def fidelity(self, name: str) -> TruncatedPoly:
        return conditional_fidelity(self.pair(name), self.max_order)


def conditional_fidelity(sp: SeriesPair, max_order: int | None = None) -> TruncatedPoly:
    """``N / D`` as a truncated series (common lowest order divided out)."""
    q = series_quotient(sp.numerator, sp.denominator)
    return q if max_order is None else q.truncate(max_order)


# Enumeration by first location keeps the work partition independent of the
# worker count; results are always merged in task order.

_WORKER: dict = {}


def _location_tables(circuit: Circuit, frame: PauliFrame | None, k: int):
    tables = []
    for loc in circuit.locations:
        evs = []
        for j, ev in enumerate(loc.events):
            if ev.degree > k:
                continue
            eff = frame.event_effect(loc.id, j) if frame is not None else None
            evs.append((j, ev.degree, ev.exps, loc.kind == "mixture", eff))
        tables.append(evs)
    return tables


def _iter_task(tables, first: int, k: int):
    """Yield (assignments, exps, mixture_hit, effect) for patterns starting at ``first``."""
    n = len(tables)

    def extend(start, chosen, deg, order_left):
        for li in range(start, n):
            for j, d, exps, mix, eff in tables[li]:
                if deg + d > k:
                    continue
                item = chosen + [(li, j, exps, mix, eff)]
                yield item
                if order_left > 1:
                    yield from extend(li + 1, item, deg + d, order_left - 1)

    for j, d, exps, mix, eff in tables[first]:
        if d > k:
            continue
        item = [(first, j, exps, mix, eff)]
        yield item
        if k > 1:
            yield from extend(first + 1, item, d, k - 1)


def _combine(item):
    ex = ey = ez = 0
    mix = False
    eff = None
    for _, _, exps, m, e in item:
        ex += exps[0]
        ey += exps[1]
        ez += exps[2]
        mix = mix or m
        if e is not None:
            eff = e if eff is None else eff ^ e
    return (ex, ey, ez), mix, eff


def _init_worker(circuit, functionals, k, path):
    _WORKER.clear()
    _WORKER["circuit"] = circuit
    _WORKER["functionals"] = functionals
    _WORKER["k"] = k
    _WORKER["path"] = path
    runner = StateVectorRunner(circuit)
    _WORKER["runner"] = runner
    frame = PauliFrame(circuit, runner) if path == "pauliframe" else None
    _WORKER["frame"] = frame
    _WORKER["tables"] = _location_tables(circuit, frame, k)


def _count_task(first: int):
    """Frame path: multiplicities of (signature, flips, residual) for one task."""
    frame = _WORKER["frame"]
    counts: dict[tuple, int] = {}
    for item in _iter_task(_WORKER["tables"], first, _WORKER["k"]):
        exps, mix, eff = _combine(item)
        key = ((exps, mix), frame.canonical_flips(eff.flips), eff.xmask, eff.zmask)
        counts[key] = counts.get(key, 0) + 1
    return counts


def _value_task(keys):
    frame = _WORKER["frame"]
    fs = _WORKER["functionals"]
    frame.prepare(fl for fl, _, _ in keys)
    return [frame.evaluate(FrameEffect(fl, x, z), fs) for fl, x, z in keys]


def _statevector_task(first: int):
    circuit = _WORKER["circuit"]
    runner = _WORKER["runner"]
    fs = _WORKER["functionals"]
    locs = circuit.locations
    sums: dict[tuple, np.ndarray] = {}
    count = 0
    for item in _iter_task(_WORKER["tables"], first, _WORKER["k"]):
        exps, mix, _ = _combine(item)
        inserts: dict[int, list] = {}
        for li, j, *_ in item:
            loc = locs[li]
            inserts.setdefault(loc.step, []).extend(loc.events[j].paulis)
        w, vals = _evaluate_branches(runner.run(inserts), fs)
        acc = sums.setdefault((exps, mix), np.zeros(1 + len(fs)))
        acc += np.array((w,) + vals)
        count += 1
    return sums, count


def _map(func, items, workers, init_args):
    if workers <= 1:
        _init_worker(*init_args)
        return [func(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=init_args) as ex:
        return list(ex.map(func, items, chunksize=chunk))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def accumulate_series(
    circuit: Circuit,
    max_order: int,
    functionals: Sequence[Functional],
    path: str = "pauliframe",
    workers: int = 1,
    progress: Progress | None = None,
) -> SeriesResult:
    """Acceptance series D and numerator series N_f for every functional.

    Only patterns of total degree <= ``max_order`` are simulated; the rest
    contribute nothing after truncation.
    """
    if not 0 <= max_order <= 3:
        raise ValueError("max_order must be in 0..3")
    if path not in ("pauliframe", "statevector"):
        raise ValueError(f"unknown engine path {path}")
    k = max_order
    fs = list(functionals)
    init_args = (circuit, fs, k, path)
    n_loc = len(circuit.locations)
    tasks = list(range(n_loc)) if k > 0 else []

    # The empty pattern is evaluated directly on the reference path.
    runner = StateVectorRunner(circuit)
    w0, v0 = _evaluate_branches(runner.run(), fs)
    sig_values: dict[tuple, np.ndarray] = {((0, 0, 0), False): np.array((w0,) + v0)}
    n_patterns = 1

    if path == "statevector":
        results = _map(_statevector_task, tasks, workers, init_args)
        for i, (sums, count) in enumerate(results):
            n_patterns += count
            for sig, arr in sums.items():
                sig_values.setdefault(sig, np.zeros(1 + len(fs)))
                sig_values[sig] = sig_values[sig] + arr
            if progress:
                progress(i + 1, len(tasks))
    elif tasks:
        counts: dict[tuple, int] = {}
        for part in _map(_count_task, tasks, workers, init_args):
            for key, c in part.items():
                counts[key] = counts.get(key, 0) + c
        n_patterns += sum(counts.values())
        unique = sorted({key[1:] for key in counts})
        batch = max(1, len(unique) // max(1, 8 * workers))
        batches = [unique[i : i + batch] for i in range(0, len(unique), batch)]
        values: dict[tuple, tuple] = {}
        for i, (keys, vals) in enumerate(zip(batches, _map(_value_task, batches, workers, init_args))):
            values.update(zip(keys, vals))
            if progress:
                progress(i + 1, len(batches))
        for key in sorted(counts):
            sig, rest = key[0], key[1:]
            w, vals = values[rest]
            acc = sig_values.setdefault(sig, np.zeros(1 + len(fs)))
            sig_values[sig] = acc + counts[key] * np.array((w,) + vals)

    den = TruncatedPoly({}, k)
    nums = [TruncatedPoly({}, k) for _ in fs]
    for sig in sorted(sig_values):
        arr = sig_values[sig]
        wpoly = pattern_weight(circuit, sig[0], sig[1], k)
        den = den + wpoly * float(arr[0])
        for i in range(len(fs)):
            nums[i] = nums[i] + wpoly * float(arr[i + 1])
    return SeriesResult(
        den,
        {f.name: n for f, n in zip(fs, nums)},
        k,
        n_patterns,
        path,
        {"locations": n_loc},
    )


# -- density-matrix oracle ----------------------------------------------------

class _Factor:
    """Density matrix of a set of qubits, stored as a (2,)*2k tensor (rows, cols)."""

    __slots__ = ("qubits", "rho")

    def __init__(self, qubits: list[int], rho: np.ndarray):
        self.qubits = qubits
        self.rho = rho

    @property
    def k(self) -> int:
        return len(self.qubits)


_H = np.array([[1, 1], [1, -1]], dtype=complex) * SQRT_HALF


def hoist_measurements(steps: Sequence) -> list:
    """Move each measurement to just after the last earlier step on its qubit.

    A measurement commutes with everything acting on other qubits, so this
    only shortens the time a measured qubit stays in the joint density matrix.
    """
    keyed = []
    last_touch: dict[int, int] = {}
    for i, s in enumerate(steps):
        if s.is_measurement:
            j = last_touch.get(s.qubits[0], -1)
            keyed.append(((j, 1, i), s))
        else:
            keyed.append(((i, 0, i), s))
        for q in s.qubits:
            last_touch[q] = i
    return [s for _, s in sorted(keyed, key=lambda t: t[0])]


class DensityMatrixSimulator:
    """Noisy density-matrix evolution of a circuit at numeric error rates.

    Qubits that have never interacted are kept in separate tensor factors, so
    the largest matrix covers only the qubits that are actually entangled.
    """

    def __init__(self, circuit: Circuit, rates: Sequence[float]):
        self.circuit = circuit
        px, py, pz = (float(r) for r in rates)
        self.p = {"I": 1.0 - px - py - pz, "X": px, "Y": py, "Z": pz}
        self.factors: dict[int, _Factor] = {}
        self.pending: dict[str, list[int]] = {}
        self.norm_scale = 1.0
        if circuit.initial_state is not None:
            k = len(circuit.outputs)
            v = circuit.initial_state
            rho = np.outer(v, v.conj()).reshape((2,) * (2 * k))
            f = _Factor(list(circuit.outputs), rho)
            for q in circuit.outputs:
                self.factors[q] = f

    # tensor bookkeeping
    def _merge(self, qubits: Sequence[int]) -> _Factor:
        fs = []
        for q in qubits:
            f = self.factors[q]
            if all(f is not g for g in fs):
                fs.append(f)
        out = fs[0]
        for f in fs[1:]:
            a, b = out.k, f.k
            rho = np.multiply.outer(out.rho, f.rho)
            perm = list(range(a)) + [2 * a + i for i in range(b)] + [a + i for i in range(a)] + [2 * a + b + i for i in range(b)]
            out = _Factor(out.qubits + f.qubits, rho.transpose(perm))
        for q in out.qubits:
            self.factors[q] = out
        return out

    def _unitary1(self, f: _Factor, q: int, u: np.ndarray):
        a = f.qubits.index(q)
        k = f.k
        rho = np.moveaxis(np.tensordot(u, f.rho, axes=([1], [a])), 0, a)
        rho = np.moveaxis(np.tensordot(rho, u.conj().T, axes=([k + a], [0])), -1, k + a)
        f.rho = rho

    def _cnot(self, f: _Factor, c: int, t: int):
        k = f.k
        ca, ta = f.qubits.index(c), f.qubits.index(t)
        rho = f.rho.copy()
        for off in (0, k):
            idx1 = [slice(None)] * (2 * k)
            idx1[ca + off] = 1
            sub = rho[tuple(idx1)]
            axis = ta + off - (1 if ta + off > ca + off else 0)
            rho[tuple(idx1)] = np.flip(sub, axis=axis)
        f.rho = rho

    def _pauli_conj(self, rho: np.ndarray, a: int, k: int, p: str) -> np.ndarray:
        out = rho
        if p in ("Z", "Y"):
            sign = np.ones((2, 2))
            sign[0, 1] = sign[1, 0] = -1.0
            shape = [1] * (2 * k)
            shape[a] = shape[k + a] = 2
            out = out * sign.reshape(shape)
        if p in ("X", "Y"):
            out = np.flip(np.flip(out, axis=a), axis=k + a)
        return out

    def _channel(self, q: int):
        # Pauli channel on one qubit, applied blockwise to the (row, col) 2x2 entries.
        f = self.factors[q]
        a = f.qubits.index(q)
        k = f.k
        rho = f.rho

        def ix(i, j):
            idx = [slice(None)] * (2 * k)
            idx[a] = i
            idx[k + a] = j
            return tuple(idx)

        p = self.p
        keep, swap = p["I"] + p["Z"], p["X"] + p["Y"]
        same, cross = p["I"] - p["Z"], p["X"] - p["Y"]
        r00, r11 = rho[ix(0, 0)].copy(), rho[ix(1, 1)].copy()
        rho[ix(0, 0)] = keep * r00 + swap * r11
        rho[ix(1, 1)] = keep * r11 + swap * r00
        r01, r10 = rho[ix(0, 1)].copy(), rho[ix(1, 0)].copy()
        rho[ix(0, 1)] = same * r01 + cross * r10
        rho[ix(1, 0)] = same * r10 + cross * r01

    def _mixture(self, qubits: Sequence[int]):
        f = self._merge(qubits)
        rho = f.rho
        s = self.p["X"] + self.p["Y"] + self.p["Z"]
        new = (1.0 - 7.0 * s) * rho
        for q in qubits:
            a = f.qubits.index(q)
            for p in ("X", "Y", "Z"):
                if self.p[p]:
                    new = new + self.p[p] * self._pauli_conj(rho, a, f.k, p)
        f.rho = new

    def _remove(self, q: int, outcomes: Sequence[int] | None):
        """Trace out ``q`` keeping only the diagonal entries for ``outcomes``."""
        f = self.factors.pop(q)
        a = f.qubits.index(q)
        k = f.k
        rho = 0
        for m in outcomes:
            idx = [slice(None)] * (2 * k)
            idx[a] = m
            idx[k + a] = m
            rho = rho + f.rho[tuple(idx)]
        rest = [r for r in f.qubits if r != q]
        if not rest:
            self.norm_scale *= float(np.real(rho))
            return
        nf = _Factor(rest, rho)
        for r in rest:
            self.factors[r] = nf

    def _close_group(self, group: str, required: int):
        qubits = self.pending.pop(group)
        f = self._merge(qubits)
        k = f.k
        total = 0
        for bits in np.ndindex(*(2,) * len(qubits)):
            if sum(bits) % 2 != required:
                continue
            idx = [slice(None)] * (2 * k)
            for q, b in zip(qubits, bits):
                a = f.qubits.index(q)
                idx[a] = b
                idx[k + a] = b
            total = total + f.rho[tuple(idx)]
        for q in qubits:
            self.factors.pop(q)
        rest = [r for r in f.qubits if r not in qubits]
        if not rest:
            self.norm_scale *= float(np.real(total))
            return
        nf = _Factor(rest, total)
        for r in rest:
            self.factors[r] = nf

    def run(self) -> np.ndarray:
        c = self.circuit
        req = dict(c.parity_groups)
        steps = hoist_measurements(c.steps)
        last = {}
        for i, s in enumerate(steps):
            if s.is_measurement and s.group is not None:
                last[s.group] = i
        for i, s in enumerate(steps):
            op = s.op
            if op == "INIT":
                q = s.qubits[0]
                rho = np.zeros((2, 2), dtype=complex)
                rho[0, 0] = 1.0
                self.factors[q] = _Factor([q], rho)
                if s.noisy:
                    self._channel(q)
            elif op == "MIX":
                if s.noisy:
                    self._mixture(s.qubits)
            elif op in ("H", "PAULI"):
                q = s.qubits[0]
                if op == "H":
                    u = _H
                else:
                    u = {"X": np.array([[0, 1], [1, 0]]), "Z": np.diag([1, -1]), "Y": np.array([[0, -1j], [1j, 0]])}[s.pauli]
                self._unitary1(self.factors[q], q, np.asarray(u, dtype=complex))
                if s.noisy:
                    self._channel(q)
            elif op == "CNOT":
                f = self._merge(s.qubits)
                self._cnot(f, *s.qubits)
                if s.noisy:
                    for q in s.qubits:
                        self._channel(q)
            elif s.is_measurement:
                q = s.qubits[0]
                if s.noisy:
                    self._channel(q)
                if op == "MX":
                    self._unitary1(self.factors[q], q, _H)
                if s.postselect is not None:
                    self._remove(q, (s.postselect,))
                else:
                    self.pending.setdefault(s.group, []).append(q)
                    if last.get(s.group) == i:
                        self._close_group(s.group, req[s.group])
            else:
                raise UnsupportedStepError(f"unsupported op {op}")
        out = self._merge(list(c.outputs))
        k = out.k
        order = [out.qubits.index(q) for q in c.outputs]
        rho = out.rho.transpose(order + [k + a for a in order]).reshape(2**k, 2**k)
        return rho * self.norm_scale


@dataclass(frozen=True)
class OracleResult:
    acceptance: float
    fidelities: dict[str, float]


def density_oracle(circuit: Circuit, rates: Sequence[float], functionals: Sequence[Functional]) -> OracleResult:
    """Exact acceptance probability and conditional fidelities at numeric rates."""
    rho = DensityMatrixSimulator(circuit, rates).run()
    acc = float(np.real(np.trace(rho)))
    if acc <= 0.0:
        raise UndefinedConditionalError("acceptance probability is zero")
    return OracleResult(acc, {f.name: f.on_density(rho) / acc for f in functionals})
