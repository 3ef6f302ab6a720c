"""Command-line entry point: list, run, check and export scenario documents.

Exit status is 0 when every check passes, 1 when a check fails and 2 for usage,
document or file errors.
"""
import argparse
import logging
import sys
from fractions import Fraction
from typing import Dict, List, Optional

import settings
from documents import (SpecError, load_document, report_body_text, resolve_parameters, write_document, write_report,
                       write_state_table)
from scenarios import RunReport, UnknownScenario, list_scenarios, run_document, scenario_document

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2


class UsageError(ValueError):
    pass


def parse_params(pairs: Optional[List[str]]) -> Dict[str, str]:
    params = {}
    for pair in pairs or []:
        name, sep, value = pair.partition('=')
        if not sep or not name.strip():
            raise UsageError(f"--param expects name=value, got {pair!r}")
        params[name.strip()] = value.strip()
    return params


def export_document(scenario_id: str, params: Dict[str, str]) -> dict:
    """The scenario document with overridden parameters baked in as defaults."""
    doc = scenario_document(scenario_id)
    resolved = resolve_parameters(doc, params)
    for name, value in resolved.items():
        spec = doc['parameters'][name]
        if isinstance(spec, dict):
            spec['default'] = str(value)
        else:
            doc['parameters'][name] = str(value)
    return doc


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected a rational number such as 1/16, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Exact coherence and dominance checks for countable forecast systems")
    parser.add_argument("--log-file", default=None, help="Log file (empty string logs to the console only)")
    parser.add_argument("--log-level", default=None, help="Logging level, e.g. INFO or DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="List the built-in scenarios")

    def add_run_options(p):
        p.add_argument("--depth", type=int, default=settings.DEFAULT_DEPTH, help="Indices checked per column")
        p.add_argument("--mode", choices=("exact", "float"), default="exact", help="Number rendering in reports")
        p.add_argument("--grid", type=_fraction, default=settings.DEFAULT_GRID, help="Rival grid step")
        p.add_argument("--safety", type=_fraction, default=settings.DEFAULT_SAFETY,
                       help="Safety factor for the constructed rival, in (0, 1)")
        p.add_argument("--param", action="append", metavar="NAME=VALUE", help="Override a document parameter")
        p.add_argument("--out", help="Write the JSON report here")
        p.add_argument("--csv", help="Write the per-state table here")

    run = sub.add_parser("run", help="Run a built-in scenario")
    run.add_argument("scenario")
    add_run_options(run)

    check = sub.add_parser("check", help="Run the checks of a JSON document")
    check.add_argument("path")
    add_run_options(check)

    export = sub.add_parser("export", help="Write a built-in scenario as a JSON document")
    export.add_argument("scenario")
    export.add_argument("--param", action="append", metavar="NAME=VALUE", help="Set a parameter's default")
    export.add_argument("--out", help="Write the document here instead of printing it")
    return parser


def _finish(report: RunReport, args) -> int:
    body = report.body(args.mode)
    if args.out:
        write_report(args.out, body)
    else:
        print(report_body_text(body))
    if args.csv:
        write_state_table(args.csv, report.space, report.quantities, args.depth, args.mode)
    for outcome in report.outcomes:
        if not outcome.passed:
            logger.error(f"[FAIL] {report.name}/{outcome.id}: {outcome.error or '; '.join(outcome.mismatches)}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def _validate(args) -> None:
    if args.depth < 1:
        raise UsageError(f"--depth must be at least 1, got {args.depth}")
    if args.grid <= 0:
        raise UsageError(f"--grid must be positive, got {args.grid}")
    if not 0 < args.safety < 1:
        raise UsageError(f"--safety must lie strictly between 0 and 1, got {args.safety}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PASS if e.code == 0 else EXIT_ERROR
    settings.configure_logging(args.log_file, args.log_level.upper() if args.log_level else None)

    try:
        if args.command == "list":
            for scenario_id in list_scenarios():
                print(f"{scenario_id} — {scenario_document(scenario_id)['title']}")
            return EXIT_PASS
        if args.command == "export":
            doc = export_document(args.scenario, parse_params(args.param))
            if args.out:
                write_document(args.out, doc)
            else:
                print(report_body_text(doc))
            return EXIT_PASS

        _validate(args)
        params = parse_params(args.param)
        if args.command == "run":
            logger.info(f"[START] Scenario {args.scenario}")
            doc = scenario_document(args.scenario)
        else:
            logger.info(f"[START] Document {args.path}")
            doc = load_document(args.path)
        report = run_document(doc, params, args.depth, args.grid, args.safety)
        return _finish(report, args)
    except (UsageError, UnknownScenario, SpecError, OSError) as e:
        logger.error(f"[ERROR] {e}")
        return EXIT_ERROR
    except Exception as e:
        logger.error(f"[ERROR] Unexpected failure: {e}")
        logger.debug("Traceback", exc_info=True)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
