"""Command line entry point: ``bilatsim {run,suite,sensitivity,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .config import ConfigError
from .engine import run
from .experiments import (
    IncompleteReportError,
    ScenarioResult,
    ScenarioSpec,
    ScenarioStats,
    builtin_scenarios,
    hypothesis_report,
    run_scenario,
)
from .metrics import SkippedPerturbation, mean_similarity, sensitivity_sweep

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_TARGET_MISSED = 3

log = logging.getLogger("bilatsim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bilatsim", description="Bilateral bond market-maker simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--workers", type=int, default=None, help="parallel replication workers")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--trace", action="store_true", help="also write trace.jsonl")

    p = sub.add_parser("suite", help="run the built-in scenario suite")
    p.add_argument("--only", help="comma-separated scenario names")
    p.add_argument("--replications", type=int, help="override every scenario's replication count")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("sensitivity", help="perturbation sweep around a configuration")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--perturb", required=True, type=float, help="relative step in percent, e.g. 10")
    p.add_argument("--params", required=True, help="comma-separated SimConfig field names")
    p.add_argument("--replications", type=int)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("report", help="hypothesis checks over a suite output directory")
    p.add_argument("--in", dest="input", required=True, type=Path)
    return parser


def _cmd_run(args) -> int:
    config, extras = io.load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.replications is not None:
        changes["replications"] = args.replications
    config = config.with_(**changes).validate()
    name = extras.get("name") or extras.get("scenario") or args.config.stem
    spec = ScenarioSpec(name, config, extras.get("description", ""))

    if args.trace:
        # traced runs execute in-process so events can be collected in order
        summaries, events = [], []
        for i in range(config.replications):
            trace: list = []
            summaries.append(run(config, i, trace=trace, keep_trades=False))
            events.extend((i, e) for e in trace)
        result = ScenarioResult(name, summaries, ScenarioStats.from_summaries(summaries), config.n_agents)
        io.emit_results(result, args.out, trace=events)
    else:
        result = run_scenario(spec, workers=args.workers)
        io.emit_results(result, args.out)
    _print_stats(name, result)
    return EXIT_OK


def _print_stats(name: str, result) -> None:
    st = result.stats
    collapse = "none" if st.median_collapse_step is None else f"{st.median_collapse_step:g}"
    status = ""
    if result.checks:
        status = "  target " + ("PASS" if result.passed else "FAIL")
    print(
        f"{name}: reps={st.replications} trade_fraction mean={st.mean:.4f} median={st.median:.4f} "
        f"min={st.min:.4f} max={st.max:.4f}  collapse share={st.collapse_share:.2f} median step={collapse}{status}"
    )


def _cmd_suite(args) -> int:
    specs = builtin_scenarios()
    if args.only:
        wanted = [n.strip() for n in args.only.split(",") if n.strip()]
        known = {s.name for s in specs}
        unknown = [n for n in wanted if n not in known]
        if unknown:
            raise UsageError(f"unknown scenario(s): {', '.join(unknown)}; known: {', '.join(sorted(known))}")
        specs = [s for s in specs if s.name in wanted]
    missed = False
    for spec in specs:
        log.info("running %s", spec.name)
        result = run_scenario(spec, workers=args.workers, replications=args.replications)
        io.emit_results(result, args.out / spec.name)
        _print_stats(spec.name, result)
        missed |= not result.passed
    return EXIT_TARGET_MISSED if missed else EXIT_OK


def _cmd_sensitivity(args) -> int:
    config, _ = io.load_config(args.config)
    if args.replications is not None:
        config = config.with_(replications=args.replications).validate()
    params = [p.strip() for p in args.params.split(",") if p.strip()]
    try:
        reports = sensitivity_sweep(config, args.perturb / 100.0, params, workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    args.out.mkdir(parents=True, exist_ok=True)
    doc = {
        "perturbation": args.perturb / 100.0,
        "parameters": params,
        "mean_outcome_similarity": mean_similarity(reports),
        "reports": [r.to_dict() for r in reports],
    }
    (args.out / "sensitivity.json").write_text(io.dumps(doc) + "\n", encoding="utf-8")
    for r in reports:
        if isinstance(r, SkippedPerturbation):
            print(f"{r.parameter} {r.direction:+d}: skipped ({r.reason})")
        else:
            print(
                f"{r.parameter} {r.direction:+d}: similarity={r.outcome_similarity:.4f} "
                f"alignment={r.interbank_alignment:.4f} population_stability={r.population_stability:.2f}"
            )
    return EXIT_OK


def _cmd_report(args) -> int:
    if not args.input.is_dir():
        raise UsageError(f"no such directory: {args.input}")
    results = io.read_suite(args.input)
    report = hypothesis_report(results)
    print(report.table())
    (args.input / "report.json").write_text(io.dumps(report.to_dict()) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "suite": _cmd_suite, "sensitivity": _cmd_sensitivity, "report": _cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"bilatsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"bilatsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.OutputError, IncompleteReportError) as exc:
        print(f"bilatsim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        log.exception("run failed")
        print(f"bilatsim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
