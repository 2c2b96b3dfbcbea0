"""Scenario drivers, reports and expected-value comparison."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import steane
from .circuit import (
    Ancilla,
    Circuit,
    build_encoding_circuit,
    build_qec_circuit,
    build_shor_circuit,
)
from .engine import PauliFrame, Progress, SeriesResult, accumulate_series
from .functionals import Functional, code_functionals, shor_state
from .poly import (
    InconsistentSeriesError,
    Monomial,
    TruncatedPoly,
    degree,
    monomials,
    restrict_to_ray,
    series_quotient,
)

MEASURE_LABELS = {
    "shor_state": "Shor fidelity",
    "seven_qubit": "7-Qubit fidelity",
    "one_qubit": "1-Qubit fidelity",
    "after_perfect_qec": "after QEC",
}
VARIANTS = ("perfect-shor-noisy-qec", "noisy-shor-perfect-qec")
SAMPLE_POINTS = ((0.0, 0.0), (math.pi / 4, 0.0), (math.pi / 8, math.pi / 3), (math.pi / 3, math.pi / 7))
SIG_DIGITS = 12
PATH_TOL = 1e-9


class ExperimentError(ValueError):
    pass


class PathMismatchError(RuntimeError):
    pass


def _round(c: float) -> float:
    return float(f"{c:.{SIG_DIGITS}g}")


def poly_to_json(p: TruncatedPoly) -> list[dict]:
    return [{"m": list(m), "c": _round(c)} for m, c in p.cleaned(1e-13)]


# -- reports ----------------------------------------------------------------

@dataclass
class FidelityReport:
    experiment_id: str
    params: dict
    results: dict[str, TruncatedPoly]
    meta: dict = field(default_factory=dict)
    runtime: float = 0.0  # wall-clock seconds; kept out of the JSON form

    def to_dict(self) -> dict:
        return {
            "experimentId": self.experiment_id,
            "params": self.params,
            "results": [{"measure": k, "poly": poly_to_json(v)} for k, v in self.results.items()],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "FidelityReport":
        k = int(data["params"].get("max_order", 2))
        results = {r["measure"]: TruncatedPoly.from_json(r["poly"], k) for r in data["results"]}
        return cls(data["experimentId"], dict(data["params"]), results, dict(data.get("meta", {})))

    @classmethod
    def from_json(cls, text: str) -> "FidelityReport":
        return cls.from_dict(json.loads(text))


def _series(
    circuit: Circuit,
    k: int,
    functionals: Sequence[Functional],
    path: str,
    workers: int,
    progress: Progress | None,
) -> SeriesResult:
    if path != "both":
        return accumulate_series(circuit, k, functionals, path, workers, progress)
    ref = accumulate_series(circuit, k, functionals, "statevector", workers, progress)
    fast = accumulate_series(circuit, k, functionals, "pauliframe", workers, progress)
    scale = max((abs(c) for _, c in ref.denominator), default=1.0) or 1.0
    if not ref.denominator.allclose(fast.denominator, PATH_TOL * scale):
        raise PathMismatchError(f"{circuit.name}: acceptance series differ between engine paths")
    for name in ref.numerators:
        if not ref.numerators[name].allclose(fast.numerators[name], PATH_TOL * scale):
            raise PathMismatchError(f"{circuit.name}: {name} series differ between engine paths")
    fast.path = "both"
    return fast


def _report(
    experiment_id: str,
    params: dict,
    circuit: Circuit,
    functionals: Sequence[Functional],
    k: int,
    path: str,
    workers: int,
    progress: Progress | None,
) -> FidelityReport:
    t0 = time.perf_counter()
    series = _series(circuit, k, functionals, path, workers, progress)
    results = {f.name: series.fidelity(f.name) for f in functionals}
    meta = {
        "patterns": series.patterns,
        "locations": len(circuit.locations),
        "engine": series.path,
        "acceptance": poly_to_json(series.denominator),
    }
    return FidelityReport(experiment_id, params, results, meta, time.perf_counter() - t0)


def _ancilla(a: Ancilla | str) -> Ancilla:
    return a if isinstance(a, Ancilla) else Ancilla.parse(a)


def shor_fidelity_experiment(
    verifications: int = 1,
    second_pair: tuple[int, int] = (1, 4),
    max_order: int = 1,
    path: str = "pauliframe",
    workers: int = 1,
    progress: Progress | None = None,
) -> FidelityReport:
    """Fidelity of the verified cat state with (|0000> + |1111>)/sqrt 2."""
    pair = tuple(second_pair) if verifications == 2 else None
    circuit = build_shor_circuit(verifications, pair)
    params = {"verifications": verifications, "max_order": max_order}
    if pair:
        params["second_pair"] = list(pair)
    return _report("table1-shor", params, circuit, [shor_state()], max_order, path, workers, progress)


def encoding_experiment(
    ancilla: Ancilla | str = "shor1",
    max_order: int = 2,
    readout: str = "exact",
    input_qubit: int = steane.DEFAULT_ENCODER_INPUT,
    path: str = "pauliframe",
    workers: int = 1,
    progress: Progress | None = None,
) -> FidelityReport:
    """Logical zero prepared by measuring the phase-flip generators twice each."""
    anc = _ancilla(ancilla)
    circuit = build_encoding_circuit(anc, readout)
    fs = code_functionals(0.0, 0.0, input_qubit, perfect_qec=True)
    params = {"ancilla": str(anc), "max_order": max_order, "readout": readout, "input_qubit": input_qubit}
    return _report("table1-encoding", params, circuit, fs, max_order, path, workers, progress)


def qec_experiment(
    order_first: str = "bit",
    ancilla: Ancilla | str = "shor1",
    alpha: float = 0.0,
    beta: float = 0.0,
    max_order: int = 2,
    readout: str = "exact",
    shor_noisy: bool = True,
    qec_noisy: bool = True,
    input_qubit: int = steane.DEFAULT_ENCODER_INPUT,
    path: str = "pauliframe",
    workers: int = 1,
    progress: Progress | None = None,
    experiment_id: str | None = None,
) -> FidelityReport:
    """Error correction of the input mixture with all-zero syndromes accepted."""
    anc = _ancilla(ancilla)
    circuit = build_qec_circuit(order_first, anc, alpha, beta, shor_noisy, qec_noisy, readout=readout)
    fs = code_functionals(alpha, beta, input_qubit, perfect_qec=False)
    params = {
        "order_first": order_first,
        "ancilla": str(anc),
        "alpha": alpha,
        "beta": beta,
        "max_order": max_order,
        "readout": readout,
        "input_qubit": input_qubit,
    }
    if not (shor_noisy and qec_noisy):
        params["shor_noisy"] = shor_noisy
        params["qec_noisy"] = qec_noisy
    eid = experiment_id or ("table2" if order_first == "bit" else "table3")
    return _report(eid, params, circuit, fs, max_order, path, workers, progress)


def mixed_noise_experiment(
    variant: str,
    order_first: str = "bit",
    alpha: float = 0.0,
    beta: float = 0.0,
    max_order: int = 2,
    readout: str = "exact",
    input_qubit: int = steane.DEFAULT_ENCODER_INPUT,
    path: str = "pauliframe",
    workers: int = 1,
    progress: Progress | None = None,
) -> FidelityReport:
    """Error correction with noise confined to the cat states or to the correction."""
    if variant not in VARIANTS:
        raise ExperimentError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    shor_noisy = variant == "noisy-shor-perfect-qec"
    report = qec_experiment(
        order_first, "shor1", alpha, beta, max_order, readout, shor_noisy, not shor_noisy,
        input_qubit, path, workers, progress, experiment_id="table4",
    )
    report.params["variant"] = variant
    return report


# -- rare-event (nonzero syndrome) analysis -----------------------------------

@dataclass(frozen=True)
class ContributingPattern:
    location: int
    step: str
    paulis: tuple[tuple[int, str], ...]  # 1-based qubits
    monomial: Monomial
    share: float  # fraction of the leading-order acceptance
    values: dict[str, float]  # functional values on the accepted branch

    def to_dict(self) -> dict:
        return {
            "location": self.location,
            "step": self.step,
            "paulis": [f"{p}{q}" for q, p in self.paulis],
            "monomial": list(self.monomial),
            "share": _round(self.share),
            "values": {k: _round(v) for k, v in self.values.items()},
        }


def contributing_patterns(
    circuit: Circuit, functionals: Sequence[Functional], leading: int, direction: Sequence[float] = (1.0, 1.0, 1.0)
) -> list[ContributingPattern]:
    """Single-location patterns of monomial degree ``leading`` that survive conditioning."""
    frame = PauliFrame(circuit)
    rows = []
    rx, ry, rz = direction
    for loc in circuit.locations:
        for j, ev in enumerate(loc.events):
            if ev.degree != leading:
                continue
            w, vals = frame.evaluate(frame.event_effect(loc.id, j), functionals)
            if w <= 1e-300:
                continue
            mono_w = rx ** ev.exps[0] * ry ** ev.exps[1] * rz ** ev.exps[2]
            rows.append((loc, ev, w * mono_w, w, vals))
    total = sum(r[2] for r in rows) or 1.0
    out = []
    for loc, ev, ww, w, vals in rows:
        out.append(
            ContributingPattern(
                loc.id,
                circuit.steps[loc.step].dump(),
                tuple((q + 1, p) for q, p in ev.paulis),
                ev.exps,
                ww / total,
                {f.name: v / w for f, v in zip(functionals, vals)},
            )
        )
    return out


def leading_quotient(n: TruncatedPoly, d: TruncatedPoly, direction: Sequence[float]) -> tuple[TruncatedPoly, bool]:
    """Series quotient, falling back to the ray ``t * direction`` when it is not polynomial."""
    try:
        return series_quotient(n, d), False
    except InconsistentSeriesError:
        return series_quotient(restrict_to_ray(n, direction), restrict_to_ray(d, direction)), True


def nonzero_syndrome_experiment(
    bit_syndrome: tuple[int, int, int] = (0, 0, 1),
    phase_syndrome: tuple[int, int, int] = (0, 0, 0),
    alpha: float = math.pi / 8,
    beta: float = math.pi / 5,
    ancilla: Ancilla | str = "shor1",
    order_first: str = "bit",
    max_order: int = 1,
    direction: Sequence[float] = (1.0, 1.0, 1.0),
    input_qubit: int = steane.DEFAULT_ENCODER_INPUT,
    path: str = "pauliframe",
    workers: int = 1,
    progress: Progress | None = None,
) -> FidelityReport:
    """Conditional fidelity given a fixed syndrome read twice in a row.

    For a nonzero syndrome the acceptance probability starts at first order
    and the reported constant term is the leading-order conditional fidelity.
    """
    t0 = time.perf_counter()
    anc = _ancilla(ancilla)
    circuit = build_qec_circuit(order_first, anc, alpha, beta, bit_syndrome=tuple(bit_syndrome),
                                phase_syndrome=tuple(phase_syndrome))
    fs = code_functionals(alpha, beta, input_qubit, perfect_qec=False)
    series = _series(circuit, max_order, fs, path, workers, progress)
    d = series.denominator
    scale = max((abs(c) for _, c in d), default=0.0)
    leading = d.lowest_order(1e-12 * scale) if scale else None
    if leading is None:
        raise ExperimentError("syndrome has zero acceptance to the simulated order")
    results, on_ray = {}, False
    for f in fs:
        q, ray = leading_quotient(series.numerators[f.name], d, direction)
        results[f.name] = q
        on_ray = on_ray or ray
    params = {
        "bit_syndrome": list(bit_syndrome),
        "phase_syndrome": list(phase_syndrome),
        "alpha": alpha,
        "beta": beta,
        "ancilla": str(anc),
        "order_first": order_first,
        "max_order": max_order,
        "input_qubit": input_qubit,
    }
    meta = {
        "patterns": series.patterns,
        "locations": len(circuit.locations),
        "engine": series.path,
        "acceptance": poly_to_json(d),
        "leading_order": leading,
        "ray": [float(x) for x in direction] if on_ray else None,
        "contributing": [p.to_dict() for p in contributing_patterns(circuit, fs, leading, direction)],
    }
    return FidelityReport("section4b", params, results, meta, time.perf_counter() - t0)


# -- expectations -------------------------------------------------------------

def angle_factors(alpha: float, beta: float) -> tuple[float, float, float]:
    """``(a, b, c)`` with a = cos 4α, b = cos 2β sin² 2α, c = cos 2β."""
    return math.cos(4 * alpha), math.cos(2 * beta) * math.sin(2 * alpha) ** 2, math.cos(2 * beta)


@dataclass(frozen=True)
class Coefficient:
    const: float
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0

    def at(self, alpha: float, beta: float) -> float:
        fa, fb, fc = angle_factors(alpha, beta)
        return self.const + self.a * fa + self.b * fb + self.c * fc

    @property
    def angle_dependent(self) -> bool:
        return bool(self.a or self.b or self.c)

    @classmethod
    def from_json(cls, value) -> "Coefficient":
        if isinstance(value, dict):
            return cls(float(value.get("const", 0.0)), float(value.get("a", 0.0)),
                       float(value.get("b", 0.0)), float(value.get("c", 0.0)))
        return cls(float(value))

    def to_json(self):
        if not self.angle_dependent:
            return self.const
        return {"const": self.const, "a": self.a, "b": self.b, "c": self.c}


@dataclass(frozen=True)
class Expectation:
    """Expected coefficients of one measure in one scenario.

    Only listed monomials are compared when ``listed_only`` is set; otherwise
    every monomial of degree <= ``max_order`` is compared (unlisted ones must
    vanish).
    """

    id: str
    experiment: str
    scenario: dict
    measure: str
    terms: dict[Monomial, Coefficient]
    max_order: int = 1
    listed_only: bool = False
    advisory: bool = False
    note: str = ""

    @property
    def angle_dependent(self) -> bool:
        return any(c.angle_dependent for c in self.terms.values())

    def applies_to(self, report: FidelityReport) -> bool:
        if report.experiment_id != self.experiment or self.measure not in report.results:
            return False
        if int(report.params.get("max_order", 0)) < self.max_order:
            return False
        return all(report.params.get(k) == v for k, v in self.scenario.items())

    def compared_monomials(self) -> list[Monomial]:
        if self.listed_only:
            return sorted(self.terms, key=lambda m: (degree(m), [-e for e in m]))
        return monomials(self.max_order)

    def expected(self, m: Monomial, alpha: float, beta: float) -> float:
        c = self.terms.get(m)
        return 0.0 if c is None else c.at(alpha, beta)

    @classmethod
    def from_json(cls, data: dict, experiment: str) -> "Expectation":
        terms = {tuple(t["m"]): Coefficient.from_json(t["c"]) for t in data["poly"]}
        return cls(
            data["id"],
            data.get("experiment", experiment),
            dict(data.get("scenario", {})),
            data["measure"],
            terms,
            int(data.get("max_order", 1)),
            bool(data.get("listed_only", False)),
            bool(data.get("advisory", False)),
            data.get("note", ""),
        )


def load_expectations(source: str | Path | None = None) -> list[Expectation]:
    """Expectation rows from a JSON file, or every bundled table when ``source`` is None."""
    if source is None:
        base = resources.files("shorsim") / "data"
        out = []
        for name in ("table1.json", "table2.json", "table3.json", "table4.json"):
            out.extend(_parse_expectations(json.loads((base / name).read_text())))
        return out
    path = Path(source)
    if not path.exists():
        bundled = resources.files("shorsim") / "data" / path.name
        if bundled.is_file():
            return _parse_expectations(json.loads(bundled.read_text()))
    return _parse_expectations(json.loads(path.read_text()))


def _parse_expectations(data: dict) -> list[Expectation]:
    exp_id = data.get("experiment", "")
    return [Expectation.from_json(row, exp_id) for row in data["rows"]]


@dataclass(frozen=True)
class ComparisonRow:
    expectation: str
    measure: str
    monomial: Monomial
    expected: float
    actual: float
    passed: bool
    advisory: bool

    @property
    def delta(self) -> float:
        return self.actual - self.expected


@dataclass
class Comparison:
    rows: list[ComparisonRow]

    @property
    def passed(self) -> bool:
        """True unless a non-advisory coefficient is out of tolerance."""
        return all(r.passed or r.advisory for r in self.rows)

    def for_measure(self, measure: str) -> list[ComparisonRow]:
        return [r for r in self.rows if r.measure == measure]

    def failures(self, include_advisory: bool = False) -> list[ComparisonRow]:
        return [r for r in self.rows if not r.passed and (include_advisory or not r.advisory)]


def compare_to_expected(report: FidelityReport, expectations: Iterable[Expectation], tol: float = 1e-6) -> Comparison:
    """Coefficient-by-coefficient comparison at the report's (alpha, beta)."""
    alpha = float(report.params.get("alpha", 0.0))
    beta = float(report.params.get("beta", 0.0))
    rows = []
    for e in expectations:
        if not e.applies_to(report):
            continue
        poly = report.results[e.measure]
        for m in e.compared_monomials():
            want = e.expected(m, alpha, beta)
            got = poly.coeff(m)
            rows.append(ComparisonRow(e.id, e.measure, m, want, got, abs(got - want) <= tol, e.advisory))
    return Comparison(rows)


def check_sampled(
    run: Callable[[float, float], FidelityReport],
    expectations: Sequence[Expectation],
    tol: float = 1e-6,
    points: Sequence[tuple[float, float]] = SAMPLE_POINTS,
) -> Comparison:
    """Compare angle-dependent expectations at several (alpha, beta) points; all must pass."""
    rows = []
    for alpha, beta in points:
        rows.extend(compare_to_expected(run(alpha, beta), expectations, tol).rows)
    return Comparison(rows)


def fit_angle_coefficients(samples: Sequence[tuple[float, float, float]], tol: float = 1e-6) -> tuple[Coefficient, bool]:
    """Recover (const, a, b) from three (alpha, beta, value) samples and check the rest.

    Returns the fitted coefficient and whether every further sample agrees
    within ``tol``.
    """
    if len(samples) < 3:
        raise ValueError("need at least three samples")
    rows = [(1.0, *angle_factors(al, be)[:2]) for al, be, _ in samples]
    vals = [v for _, _, v in samples]
    sol = np.linalg.solve(np.array(rows[:3]), np.array(vals[:3]))
    fit = Coefficient(*(float(x) for x in sol))
    ok = all(abs(fit.at(al, be) - v) <= tol for al, be, v in samples[3:])
    return fit, ok
