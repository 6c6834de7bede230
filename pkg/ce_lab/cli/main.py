from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from ce_lab.core.config import load_environment, load_settings
from ce_lab.models import SKIPPED, BuilderSpec, CertificateReport
from ce_lab.models.errors import CELabError, DimensionError, ParseError
from ce_lab.services.builders import BuilderKind, random_instance
from ce_lab.services.corpus import run_corpus
from ce_lab.services.pipeline import run_pipeline, run_proof_steps
from ce_lab.services.problem_io import parse_problem, problem_document, write_json, write_report
from ce_lab.utils.log_util import configure_logger, set_log_level

log = configure_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2


def _positive_float(raw: str) -> float:
    value = float(raw)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {raw}")
    return value


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {raw}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=_positive_float, help="Sets eps_herm, eps_psd and eps_residual at once.")
    common.add_argument("--k-max", type=_positive_int, dest="k_max", help="Largest matrix level for the order check.")
    common.add_argument("--json-out", dest="json_out", help="Write the report (or corpus summary) as JSON here.")
    common.add_argument("--config", help="toml settings file (defaults to CE_LAB_CONFIG or ./ce_lab.toml).")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors.")

    parser = argparse.ArgumentParser(
        prog="ce-lab",
        description="Certify completely positive contractive projections and the C*-structure of their ranges.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    certify = sub.add_parser("certify", parents=[common], help="Run the full pipeline on a problem file.")
    certify.add_argument("file")

    steps = sub.add_parser("proof-steps", parents=[common], help="Only J ⊆ Ker, Ker = J, bilaterality and words.")
    steps.add_argument("file")

    build = sub.add_parser("build", parents=[common], help="Emit a problem file from a builder.")
    build.add_argument("--kind", required=True, choices=BuilderKind.list_values())
    build.add_argument("--n", type=int, required=True)
    build.add_argument("--seed", type=int, default=0)
    build.add_argument("-o", "--output", help="Output path; stdout when omitted.")
    build.add_argument(
        "--materialize", action="store_true", help="Embed the built map's Choi matrix instead of the builder seed."
    )

    corpus = sub.add_parser("corpus", parents=[common], help="Generate and certify a seeded corpus.")
    corpus.add_argument("--count", type=_positive_int, default=100)
    corpus.add_argument("--n-max", type=int, dest="n_max", default=4)
    corpus.add_argument("--seed", type=int, default=0)
    corpus.add_argument("--csv", help="Also write the per-instance table as CSV.")
    return parser


def _print_report(report: CertificateReport) -> None:
    print(f"{report.label} (n={report.ambient_dim}): exit {report.exit_code}")
    if report.dims:
        print("  dims: " + ", ".join(f"{k}={v}" for k, v in report.dims.items()))
    for result in report.checks:
        if result.verdict == SKIPPED and result.detail == "not requested":
            continue
        residual = "" if result.residual is None else f" residual={result.residual:.3e}"
        detail = f" ({result.detail})" if result.detail else ""
        print(f"  {result.name}: {result.verdict}{residual}{detail}")


def _certify(args, settings, proof_steps: bool) -> int:
    try:
        problem = parse_problem(args.file)
    except (ParseError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if proof_steps:
        report = run_proof_steps(problem, settings, args.tol)
    else:
        report = run_pipeline(problem, settings, args.tol, args.k_max)
    if args.json_out:
        write_report(report, args.json_out)
    _print_report(report)
    return report.exit_code


def _build(args, settings) -> int:
    tol = settings.tolerances if args.tol is None else settings.tolerances.with_residual(args.tol)
    label = f"{args.kind}-n{args.n}-s{args.seed}"
    try:
        if args.materialize:
            cp_map = random_instance(args.n, args.kind, args.seed, tol)
            document = problem_document(args.n, cp_map=cp_map, seed=args.seed, label=label)
        else:
            # validate n before emitting a document that cannot be built
            if not 2 <= args.n <= 8:
                raise ValueError(f"random instances need 2 <= n <= 8, got {args.n}")
            document = problem_document(args.n, builder=BuilderSpec(kind=args.kind, seed=args.seed), label=label)
    except (CELabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    target = args.output or args.json_out
    if target:
        write_json(document, target)
    else:
        print(json.dumps(document, indent=2))
    return EXIT_OK


def _corpus(args, settings) -> int:
    try:
        result = run_corpus(args.count, args.n_max, args.seed, settings, args.tol, args.k_max)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.json_out:
        write_json(result.summary, args.json_out)
    if args.csv:
        result.frame.to_csv(args.csv, index=False)
    summary = result.summary
    print(f"{summary['passed']}/{summary['instances']} instances passed; {summary['content_instances']} content instances")
    for name, stats in summary["checks"].items():
        worst = "-" if stats["max_residual"] is None else f"{stats['max_residual']:.3e}"
        print(f"  {name}: pass {stats['pass']} fail {stats['fail']} max residual {worst}")
    return result.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    load_environment()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    if args.quiet:
        set_log_level(logging.WARNING)
    settings = load_settings(args.config)

    if args.command in ("certify", "proof-steps"):
        return _certify(args, settings, proof_steps=args.command == "proof-steps")
    if args.command == "build":
        return _build(args, settings)
    return _corpus(args, settings)


if __name__ == "__main__":
    sys.exit(main())
