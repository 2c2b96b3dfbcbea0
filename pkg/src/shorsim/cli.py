"""Command-line front end: ``shorsim run <experiment> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Sequence

from . import steane
from .circuit import Ancilla, CircuitError
from .engine import default_workers
from .experiments import (
    MEASURE_LABELS,
    VARIANTS,
    Comparison,
    ExperimentError,
    FidelityReport,
    PathMismatchError,
    compare_to_expected,
    encoding_experiment,
    load_expectations,
    mixed_noise_experiment,
    nonzero_syndrome_experiment,
    poly_to_json,
    qec_experiment,
    shor_fidelity_experiment,
)
from .poly import VARIABLES, _format_coeff

EXPERIMENTS = ("table1-shor", "table1-encoding", "table1", "table2", "table3", "table4", "section4b")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ALL_ANCILLAS = ("shor0", "shor1", "shor2", "single")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    experiment: str
    ancillas: list[Ancilla]
    verifications: list[int]
    order_first: list[str]
    variants: list[str]
    alpha: float
    beta: float
    max_order: int
    readout: str
    engine: str
    workers: int
    fmt: str
    expect: str | None
    tolerance: float
    bit_syndrome: tuple[int, int, int] = (0, 0, 1)
    second_pair: tuple[int, int] = (1, 4)
    input_qubit: int = steane.DEFAULT_ENCODER_INPUT
    progress: bool = False
    extra: dict = field(default_factory=dict)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shorsim", description="Exact perturbative fidelities for Steane-code error correction.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("experiment", choices=EXPERIMENTS)
    r.add_argument("--verifications", type=int, choices=(0, 1, 2), help="cat-state parity checks")
    r.add_argument("--ancilla", choices=("shor", "single"), help="syndrome ancilla kind")
    r.add_argument("--second-pair", default="1,4", help="cat qubits checked by the second verification")
    r.add_argument("--alpha", type=float, help="input state angle alpha (radians)")
    r.add_argument("--beta", type=float, help="input state phase beta (radians)")
    r.add_argument("--order-first", choices=("bit", "phase"))
    r.add_argument("--variant", choices=VARIANTS)
    r.add_argument("--bit-syndrome", default="0,0,1", help="section4b bit-flip syndrome triple")
    r.add_argument("-K", "--max-order", type=int, default=2)
    r.add_argument("--readout", choices=("exact", "parity"), default="exact")
    r.add_argument("--engine", choices=("statevector", "pauliframe", "both"), default="pauliframe")
    r.add_argument("--workers", type=int, default=None, help="worker processes (default: $SHORSIM_WORKERS or 1)")
    r.add_argument("--input-qubit", type=int, choices=(3, 5, 6), default=steane.DEFAULT_ENCODER_INPUT,
                   help="encoder input qubit (decoder convention)")
    r.add_argument("--format", dest="fmt", choices=("table", "csv", "json"), default="table")
    r.add_argument("--expect", help="expectation JSON (path or bundled name such as table2.json)")
    r.add_argument("--tolerance", type=float, default=1e-6)
    r.add_argument("--progress", action="store_true", help="report progress on stderr")
    return p


def _triple(text: str, what: str) -> tuple[int, int, int]:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{what} must look like 0,0,1") from None
    if len(vals) != 3 or any(v not in (0, 1) for v in vals):
        raise UsageError(f"{what} must be three bits, got {text!r}")
    return vals  # type: ignore[return-value]


def parse_args(argv: Sequence[str]) -> RunConfig:
    ns = build_parser().parse_args(list(argv))
    exp = ns.experiment
    if not 1 <= ns.max_order <= 3:
        raise UsageError("--max-order must be in 1..3")
    if ns.tolerance <= 0:
        raise UsageError("--tolerance must be positive")
    workers = default_workers() if ns.workers is None else ns.workers
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    try:
        a, b = (int(v) for v in ns.second_pair.split(","))
    except ValueError:
        raise UsageError("--second-pair must look like 1,4") from None
    if not (1 <= a <= 4 and 1 <= b <= 4 and a != b):
        raise UsageError("--second-pair must name two distinct cat qubits in 1..4")
    pair = (a, b)

    if ns.ancilla == "single" and ns.verifications is not None:
        raise UsageError("--verifications does not apply to --ancilla single")
    if ns.ancilla == "single" and exp == "table1-shor":
        raise UsageError("table1-shor has no single-ancilla column")
    if ns.ancilla == "single" and exp == "table4":
        raise UsageError("table4 uses verified cat states only")
    if ns.ancilla or ns.verifications is not None:
        if ns.ancilla == "single":
            ancillas = [Ancilla("single", 0)]
        else:
            n = 1 if ns.verifications is None else ns.verifications
            ancillas = [Ancilla("shor", n, pair)]
    else:
        ancillas = [Ancilla.parse(t) if t != "shor2" else Ancilla("shor", 2, pair) for t in ALL_ANCILLAS]
    verifications = [x.verifications for x in ancillas if x.kind == "shor"]

    implied = {"table2": "bit", "table3": "phase"}.get(exp)
    if implied and ns.order_first and ns.order_first != implied:
        raise UsageError(f"{exp} fixes --order-first {implied}")
    if exp in ("table1-shor", "table1-encoding", "table1") and ns.order_first:
        raise UsageError("--order-first does not apply to Table 1 experiments")
    if ns.variant and exp != "table4":
        raise UsageError("--variant applies to table4 only")
    if exp.startswith("table1") and (ns.alpha is not None or ns.beta is not None):
        raise UsageError("--alpha/--beta do not apply to Table 1 experiments")
    if exp == "section4b":
        orders = [ns.order_first or "bit"]
    elif implied:
        orders = [implied]
    else:
        orders = [ns.order_first] if ns.order_first else ["bit", "phase"]
    variants = [ns.variant] if ns.variant else list(VARIANTS)
    default_ab = (math.pi / 8, math.pi / 5) if exp == "section4b" else (0.0, 0.0)
    alpha = default_ab[0] if ns.alpha is None else ns.alpha
    beta = default_ab[1] if ns.beta is None else ns.beta
    return RunConfig(
        exp, ancillas, verifications, orders, variants, alpha, beta, ns.max_order, ns.readout,
        ns.engine, workers, ns.fmt, ns.expect, ns.tolerance, _triple(ns.bit_syndrome, "--bit-syndrome"),
        pair, ns.input_qubit, ns.progress,
    )


def _progress_hook(enabled: bool):
    if not enabled:
        return None

    def hook(done: int, total: int) -> None:
        print(f"\r  {done}/{total}", end="" if done < total else "\n", file=sys.stderr, flush=True)

    return hook


def run_config(cfg: RunConfig) -> list[FidelityReport]:
    common = dict(path=cfg.engine, workers=cfg.workers, progress=_progress_hook(cfg.progress))
    k = cfg.max_order
    out: list[FidelityReport] = []
    exp = cfg.experiment
    if exp in ("table1-shor", "table1"):
        for n in cfg.verifications:
            out.append(shor_fidelity_experiment(n, cfg.second_pair, min(k, 2), **common))
    if exp in ("table1-encoding", "table1"):
        for anc in cfg.ancillas:
            out.append(encoding_experiment(anc, k, cfg.readout, cfg.input_qubit, **common))
    if exp in ("table2", "table3"):
        for anc in cfg.ancillas:
            out.append(qec_experiment(cfg.order_first[0], anc, cfg.alpha, cfg.beta, k, cfg.readout,
                                      input_qubit=cfg.input_qubit, **common))
    if exp == "table4":
        for variant in cfg.variants:
            for order in cfg.order_first:
                out.append(mixed_noise_experiment(variant, order, cfg.alpha, cfg.beta, k, cfg.readout,
                                                  cfg.input_qubit, **common))
    if exp == "section4b":
        anc = cfg.ancillas[0] if len(cfg.ancillas) == 1 else Ancilla("shor", 1)
        out.append(nonzero_syndrome_experiment(cfg.bit_syndrome, (0, 0, 0), cfg.alpha, cfg.beta, anc,
                                               cfg.order_first[0], 1, input_qubit=cfg.input_qubit, **common))
    return out


# -- emitters -----------------------------------------------------------------

def format_terms(poly) -> str:
    """``1 −10 p_x −11 p_y −7 p_z`` style: signed coefficients in degree order."""
    parts = []
    for m, c in poly.cleaned(1e-9):
        mono = " ".join(n if e == 1 else f"{n}^{e}" for n, e in zip(VARIABLES, m) if e)
        mag = _format_coeff(abs(c))
        body = (mag if not mono else (mono if mag == "1" else f"{mag} {mono}"))
        if not parts:
            parts.append(("−" if c < 0 else "") + body)
        else:
            parts.append(("−" if c < 0 else "+") + body)
    return " ".join(parts) if parts else "0"


def _describe(report: FidelityReport) -> str:
    keys = [k for k in sorted(report.params) if k not in ("input_qubit",)]
    return f"# {report.experiment_id} " + " ".join(f"{k}={report.params[k]}" for k in keys)


def _measure_status(comp: Comparison | None, measure: str) -> str:
    if comp is None:
        return ""
    rows = comp.for_measure(measure)
    if not rows:
        return ""
    hard = [r for r in rows if not r.advisory]
    soft = [r for r in rows if r.advisory]
    if any(not r.passed for r in hard):
        return "  FAIL"
    if any(not r.passed for r in soft):
        return "  PASS (advisory mismatch)"
    return "  PASS"


def emit_table(reports: Sequence[FidelityReport], comparisons: Sequence[Comparison | None]) -> str:
    lines = []
    for rep, comp in zip(reports, comparisons):
        lines.append(_describe(rep))
        for measure, poly in rep.results.items():
            label = MEASURE_LABELS.get(measure, measure)
            lines.append(f"{label}: {format_terms(poly)}{_measure_status(comp, measure)}")
        if rep.experiment_id == "section4b":
            lines.append(f"leading order: {rep.meta['leading_order']}")
            for pat in rep.meta["contributing"]:
                lines.append(f"  share {pat['share']:.4g}: {' '.join(pat['paulis'])} at {pat['step']}")
        if comp is not None:
            for r in comp.failures(include_advisory=True):
                tag = "advisory" if r.advisory else "FAIL"
                lines.append(f"  [{tag}] {r.expectation} {list(r.monomial)}: expected {r.expected:.12g}, "
                             f"got {r.actual:.12g} (delta {r.delta:+.3g})")
        lines.append("")
    return "\n".join(lines)


def emit_csv(reports: Sequence[FidelityReport], comparisons: Sequence[Comparison | None]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "params", "measure", "ex", "ey", "ez", "coefficient", "status"])
    for rep, comp in zip(reports, comparisons):
        params = json.dumps(rep.params, sort_keys=True, separators=(",", ":"))
        for measure, poly in rep.results.items():
            status = _measure_status(comp, measure).strip()
            for term in poly_to_json(poly):
                w.writerow([rep.experiment_id, params, measure, *term["m"], f"{term['c']:.12g}", status])
    return buf.getvalue()


def emit_json(reports: Sequence[FidelityReport], comparisons: Sequence[Comparison | None]) -> str:
    docs = []
    for rep, comp in zip(reports, comparisons):
        d = rep.to_dict()
        if comp is not None:
            d["comparison"] = {
                "passed": comp.passed,
                "rows": [
                    {"id": r.expectation, "measure": r.measure, "m": list(r.monomial),
                     "expected": float(f"{r.expected:.12g}"), "actual": float(f"{r.actual:.12g}"),
                     "passed": r.passed, "advisory": r.advisory}
                    for r in comp.rows
                ],
            }
        docs.append(d)
    return json.dumps(docs, sort_keys=True, indent=2) + "\n"


EMITTERS = {"table": emit_table, "csv": emit_csv, "json": emit_json}


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except UsageError as e:
        print(f"shorsim: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        expectations = load_expectations(cfg.expect) if cfg.expect else None
    except (OSError, ValueError, KeyError) as e:
        print(f"shorsim: error: cannot read expectations: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        reports = run_config(cfg)
    except (CircuitError, ExperimentError) as e:
        print(f"shorsim: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PathMismatchError as e:
        print(f"shorsim: engine paths disagree: {e}", file=sys.stderr)
        return EXIT_FAIL
    comparisons = [compare_to_expected(r, expectations, cfg.tolerance) if expectations is not None else None
                   for r in reports]
    sys.stdout.write(EMITTERS[cfg.fmt](reports, comparisons))
    if any(c is not None and not c.passed for c in comparisons):
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
