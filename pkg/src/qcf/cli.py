"""Command-line interface: model validation, counterfactual queries,
classical evaluation, lifting, the classical/quantum comparison harness, and
the Bell-scenario demonstration."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .counterfactual import (
    AmbiguousQuery,
    bell_demo,
    disambiguate_minimal,
    evaluate_report,
    make_bell_model,
)
from .documents import (
    BoundQsm,
    bind_classical_query,
    bind_quantum_query,
    build_classical,
    build_qsm,
    model_to_document,
    parse_model,
    parse_query,
    serialize_model,
)
from .classical import classical_counterfactual
from .errors import ParseError, QcfError, ZeroEvidenceProbabilityError
from .lift import corollary1_check, lift
from .qsm import marginal_process, validate_qsm
from .process import validate_process
from .tensor import DEFAULT_TOL, Tolerance

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_COUNTERPOSSIBLE = 3
EXIT_USAGE = 64

REPORT_SCHEMA = "qcf-report/1"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _tolerance() -> Tolerance:
    eps = os.environ.get("QCF_EPS")
    if eps is None:
        return DEFAULT_TOL
    try:
        value = float(eps)
    except ValueError:
        print(f"warning: ignoring malformed QCF_EPS={eps!r}", file=sys.stderr)
        return DEFAULT_TOL
    return Tolerance(value, value, value, DEFAULT_TOL.eps_prob)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_model_file(path: str):
    try:
        return parse_model(_read(path))
    except ParseError as exc:
        print(f"{path}:{exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _parse_query_file(path: str):
    try:
        return parse_query(_read(path))
    except ParseError as exc:
        print(f"{path}:{exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _require_kind(doc, kind: str, path: str):
    if doc.kind != kind:
        print(f"error: {path} is a {doc.kind} document, expected {kind}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _value_json(value) -> object:
    return "*" if value.is_counterpossible else value.probability


def report_to_dict(report, model_path: str, query_path: str, tol=DEFAULT_TOL) -> dict:
    posterior_total = sum(p for _, p in report.posterior)
    return {
        "schema": REPORT_SCHEMA,
        "model": model_path,
        "query": query_path,
        "kind": report.kind.value,
        "evidence_probability": report.evidence_probability,
        "diagnostics": {
            "eps_prob": tol.eps_prob,
            "posterior_normalization_residual": abs(posterior_total - 1.0),
        },
        "posterior": [
            {"lambda": dict(a), "probability": p} for a, p in report.posterior
        ],
        "per_lambda": [
            {
                "lambda": dict(a),
                "value": None if v is None else _value_json(v),
                "skipped": v is None,
            }
            for a, v in report.per_lambda
        ],
        "counterpossible_lambdas": [dict(a) for a in report.counterpossible_lambdas],
        "result": _value_json(report.value),
    }


def render_text(report, model_path: str, query_path: str) -> str:
    lines = [
        f"model:    {model_path}",
        f"query:    {query_path}",
        f"kind:     {report.kind.value}",
        f"P(evidence): {report.evidence_probability!r}",
        "posterior:",
    ]
    for assignment, p in report.posterior:
        key = ", ".join(f"{k}={v}" for k, v in sorted(assignment.items()))
        lines.append(f"  {key}: {p!r}")
    lines.append("per-lambda counterfactual probability:")
    for assignment, v in report.per_lambda:
        key = ", ".join(f"{k}={v2}" for k, v2 in sorted(assignment.items()))
        shown = "(zero posterior, skipped)" if v is None else str(v)
        lines.append(f"  {key}: {shown}")
    if report.counterpossible_lambdas:
        for assignment in report.counterpossible_lambdas:
            key = ", ".join(f"{k}={v}" for k, v in sorted(assignment.items()))
            lines.append(f"counterpossible triggered by: {key}")
    lines.append(f"result: {report.value}")
    return "\n".join(lines) + "\n"


def _cmd_validate(args) -> int:
    tol = _tolerance()
    doc = _parse_model_file(args.model)
    if doc.kind == "classical-psm":
        try:
            psm = build_classical(doc)
        except ParseError as exc:
            print(f"{args.model}:{exc}", file=sys.stderr)
            return EXIT_INVALID
        n_u = 1
        for v in psm.csm.exogenous:
            n_u *= len(v.values)
        print(f"classical model ok: {len(psm.csm.endogenous)} variables, "
              f"{n_u} exogenous assignments")
        return EXIT_OK
    try:
        bound = build_qsm(doc, tol)
    except ParseError as exc:
        print(f"{args.model}:{exc}", file=sys.stderr)
        return EXIT_INVALID
    report = validate_qsm(bound.qsm, tol)
    sigma = marginal_process(bound.qsm)
    proc = validate_process(sigma, tol, seed=args.seed)
    print(f"isometry defect:      {report.isometry_defect:.3e}")
    print(f"exogenous valid:      {report.exogenous_valid}")
    print(f"no-influence (exo):   {report.no_influence_exogenous}")
    print(f"no-influence (dag):   {report.no_influence_dag}")
    print(f"marginal process psd: {proc.psd}")
    print(f"trace residual:       {proc.trace_residual:.3e}")
    print(f"battery deviation:    {proc.battery_deviation:.3e}")
    ok = report.ok and proc.valid
    print(f"result: {'valid' if ok else 'INVALID'}")
    return EXIT_OK if ok else EXIT_INVALID


def _run_one_query(bound: BoundQsm, qdoc, tol, model_path, query_path):
    if qdoc.kind == "classical":
        raise ParseError("classical query given to a quantum model", 1, 1, kind="semantic")
    query = bind_quantum_query(bound, qdoc, tol)
    if isinstance(query, AmbiguousQuery):
        query = disambiguate_minimal(bound.qsm, query, tol)
    report = evaluate_report(bound.qsm, query, tol)
    return report


def _cmd_query(args) -> int:
    tol = _tolerance()
    doc = _parse_model_file(args.model)
    _require_kind(doc, "qsm", args.model)
    try:
        bound = build_qsm(doc, tol)
    except ParseError as exc:
        print(f"{args.model}:{exc}", file=sys.stderr)
        return EXIT_INVALID

    qdocs = [(path, _parse_query_file(path)) for path in args.query]

    def run(item):
        path, qdoc = item
        try:
            return path, _run_one_query(bound, qdoc, tol, args.model, path), None
        except (ParseError, QcfError) as exc:
            return path, None, exc

    if args.jobs > 1 and len(qdocs) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run, qdocs))
    else:
        results = [run(item) for item in qdocs]

    exit_code = EXIT_OK
    for path, report, exc in results:
        if exc is not None:
            print(f"{path}: {exc}", file=sys.stderr)
            exit_code = EXIT_INVALID
            continue
        if args.report == "json":
            print(json.dumps(report_to_dict(report, args.model, path, tol), indent=2, sort_keys=True))
        else:
            sys.stdout.write(render_text(report, args.model, path))
        if report.value.is_counterpossible and args.fail_on_counterpossible:
            exit_code = max(exit_code, EXIT_COUNTERPOSSIBLE)
    return exit_code


def _cmd_classical(args) -> int:
    doc = _parse_model_file(args.model)
    _require_kind(doc, "classical-psm", args.model)
    try:
        psm = build_classical(doc)
    except ParseError as exc:
        print(f"{args.model}:{exc}", file=sys.stderr)
        return EXIT_INVALID
    qdoc = _parse_query_file(args.query)
    if qdoc.kind != "classical":
        print(f"error: {args.query} is not a classical query", file=sys.stderr)
        return EXIT_USAGE
    query = bind_classical_query(qdoc)
    try:
        value = classical_counterfactual(psm, query)
    except ZeroEvidenceProbabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"result: {value!r}")
    return EXIT_OK


def _cmd_lift(args) -> int:
    doc = _parse_model_file(args.model)
    _require_kind(doc, "classical-psm", args.model)
    try:
        psm = build_classical(doc)
    except ParseError as exc:
        print(f"{args.model}:{exc}", file=sys.stderr)
        return EXIT_INVALID
    result = lift(psm)
    report = validate_qsm(result.qsm, _tolerance())
    print(f"nodes: {[n.name for n in result.qsm.endogenous]}")
    print(f"carried copies: {result.copies}")
    print(f"node dims: {[n.in_dim for n in result.qsm.endogenous]}")
    print(f"sink dims per node: {result.sink_dims}")
    print(f"isometry defect: {report.isometry_defect:.3e}")
    print(f"no-influence checks: {'all pass' if report.ok else 'FAILED'}")
    if args.emit_qsm:
        named = {f"measure.{node}": instr for node, instr in result.measurements.items()}
        emitted = model_to_document(result.qsm, named)
        Path(args.emit_qsm).write_text(serialize_model(emitted), encoding="utf-8")
        print(f"wrote {args.emit_qsm}")
    return EXIT_OK if report.ok else EXIT_INVALID


def _cmd_compare(args) -> int:
    doc = _parse_model_file(args.model)
    _require_kind(doc, "classical-psm", args.model)
    try:
        psm = build_classical(doc)
    except ParseError as exc:
        print(f"{args.model}:{exc}", file=sys.stderr)
        return EXIT_INVALID
    qdoc = _parse_query_file(args.query)
    if qdoc.kind != "classical":
        print(f"error: {args.query} is not a classical query", file=sys.stderr)
        return EXIT_USAGE
    query = bind_classical_query(qdoc)
    try:
        classical_value, quantum_value = corollary1_check(psm, query)
    except ZeroEvidenceProbabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    delta = abs(classical_value - quantum_value)
    print(f"classical three-step value: {classical_value!r}")
    print(f"lifted do-interventional:   {quantum_value!r}")
    print(f"|delta|: {delta:.3e}")
    return EXIT_OK if delta <= 1e-9 else EXIT_INVALID


def _cmd_bell_demo(args) -> int:
    model = make_bell_model()
    report = bell_demo(model, _tolerance())
    print("Bell scenario (common cause C -> A, C -> B; evidence a = b = 0):")
    print(f"  passive   Q1  P(b'=1 | a'=1): {report.passive_q1}")
    print(f"  passive   Q2  P(b'=1 | a'=0): {report.passive_q2}")
    print(f"  do        Q1  P(b'=1 | do a'=1): {report.do_q1}")
    print(f"  do        Q2  P(b'=1 | do a'=0): {report.do_q2}")
    print(f"  causal edges: {list(report.edges)} (no edge between A and B)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _Parser(prog="qcf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a model file")
    p.add_argument("model")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("query", help="evaluate counterfactual queries on a qsm")
    p.add_argument("model")
    p.add_argument("query", nargs="+")
    p.add_argument("--report", choices=["text", "json"], default="text")
    p.add_argument("--fail-on-counterpossible", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=_cmd_query)

    p = sub.add_parser("classical", help="evaluate a classical counterfactual")
    p.add_argument("model")
    p.add_argument("query")
    p.set_defaults(fn=_cmd_classical)

    p = sub.add_parser("lift", help="lift a classical model to a qsm")
    p.add_argument("model")
    p.add_argument("--emit-qsm", metavar="PATH")
    p.set_defaults(fn=_cmd_lift)

    p = sub.add_parser("compare", help="classical vs lifted do-interventional value")
    p.add_argument("model")
    p.add_argument("query")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("bell-demo", help="print the common-cause scenario values")
    p.set_defaults(fn=_cmd_bell_demo)

    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:  # argparse usage errors and early aborts
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except QcfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
