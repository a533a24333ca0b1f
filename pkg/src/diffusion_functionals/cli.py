"""Command-line entry point: classify, verify and identity checks."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, NoReturn, Optional, Sequence

from . import __version__
from .classify import full_verdict
from .coeffspec import ProblemValidationError, parse_expr, validate_problem
from .config import AppSettings, get_settings
from .db import delete_run, get_run, list_runs, problem_key, record_report, verdict_history
from .models import (
    ConfigError,
    IdentitiesSection,
    Report,
    RunConfig,
    SimulationSection,
    load_config,
)
from .reporting import check_section, classifier_section, summary_section
from .samples import list_problems, load_problem
from .simkit.agreement import verdict_agreement
from .simkit.dump import write_paths
from .simkit.identities import (
    cherny_dichotomy_check,
    fubini_mean_check,
    local_time_positivity_check,
    occupation_check,
    ray_knight_check,
    williams_check,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FLAGGED = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("config", nargs="?", type=Path, help="JSON or YAML run config.")
    source.add_argument("--sample", help="Name of a bundled problem instead of a config path.")
    parser.add_argument("--seed", type=int, default=None, help="Override simulation.master_seed.")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (results do not depend on it).")
    parser.add_argument(
        "--paths", type=int, default=None, help="Override the Monte Carlo path count N."
    )
    parser.add_argument("--out", type=Path, default=None, help="Write the JSON report here.")
    parser.add_argument("--json", action="store_true", help="Print the JSON report instead of a summary.")
    parser.add_argument("--record", action="store_true", help="Save the run in the ledger.")
    parser.add_argument("--label", default=None, help="Ledger label for --record.")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="diffusion-functionals",
        description="Classify and simulate integral functionals of one-dimensional diffusions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_arguments(sub.add_parser("classify", help="Convergence verdict per event."))
    _add_run_arguments(
        sub.add_parser("verify", help="Verdict plus Monte Carlo trend agreement.")
    )
    _add_run_arguments(
        sub.add_parser("identities", help="Ray-Knight, Williams, Cherny, Fubini, occupation checks.")
    )

    samples = sub.add_parser("samples", help="List bundled problems.")
    samples.add_argument("--json", action="store_true")

    runs = sub.add_parser("runs", help="Inspect the verdict ledger.")
    runs.add_argument("--show", metavar="ID", default=None)
    runs.add_argument("--delete", metavar="ID", default=None)
    runs.add_argument("--limit", type=int, default=20)
    problem = runs.add_mutually_exclusive_group()
    problem.add_argument("--problem", type=Path, default=None, help="Only runs of this config's problem.")
    problem.add_argument("--sample", default=None, help="Only runs of this bundled problem.")
    runs.add_argument(
        "--history", action="store_true", help="Print per-event verdicts of the selected problem."
    )

    schema = sub.add_parser("schema", help="Write the report JSON schema.")
    schema.add_argument("--out", type=Path, default=None)
    return parser


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _classify(config: RunConfig, settings: AppSettings, timings: Dict[str, float]):
    block = config.require_problem()
    tol = config.tolerances
    started = time.perf_counter()
    problem = block.build()
    validate_problem(problem, settings.validation_probes, tol).raise_for_violations()
    report = full_verdict(
        problem,
        tol,
        reference_point=block.reference_point,
        f_ae_zero=block.f_ae_zero,
        settings=settings,
    )
    timings["classify"] = time.perf_counter() - started
    return problem, report


def cmd_classify(config: RunConfig, *, settings: Optional[AppSettings] = None) -> Report:
    settings = settings or get_settings()
    timings: Dict[str, float] = {}
    _, verdict = _classify(config, settings, timings)
    conclusive = verdict.status == "conclusive"
    return Report(
        version=__version__,
        subcommand="classify",
        status=verdict.status,
        exit_code=EXIT_OK if conclusive else EXIT_FLAGGED,
        config=config,
        classifier=classifier_section(verdict),
        timings=timings,
    )


def cmd_verify(
    config: RunConfig,
    *,
    settings: Optional[AppSettings] = None,
    threads: Optional[int] = None,
) -> Report:
    settings = settings or get_settings()
    sim = config.simulation
    threads = min(threads or sim.threads, settings.max_threads)
    timings: Dict[str, float] = {}
    problem, verdict = _classify(config, settings, timings)
    classifier = classifier_section(verdict)
    if verdict.status != "conclusive":
        return Report(
            version=__version__,
            subcommand="verify",
            status="inconclusive",
            exit_code=EXIT_FLAGGED,
            config=config,
            classifier=classifier,
            timings=timings,
        )
    if verdict.reduced.problem is None:
        return Report(
            version=__version__,
            subcommand="verify",
            status="conclusive",
            exit_code=EXIT_FLAGGED,
            config=config,
            classifier=classifier,
            simulation=SimulationSection(
                threshold=sim.agreement_threshold, passed=False, flags=["x0_in_D"]
            ),
            timings=timings,
        )

    dump_count = config.output.dump_limit if config.output.dump_paths else 0
    started = time.perf_counter()
    summary = verdict_agreement(
        problem,
        verdict,
        sim.n_paths,
        dt=sim.dt,
        horizon=sim.horizon,
        master_seed=sim.master_seed,
        dyadic_count=sim.dyadic_count,
        block_size=sim.block_size,
        threads=threads,
        record_stride=sim.record_stride,
        max_halvings=sim.max_halvings,
        min_event_paths=settings.min_event_paths,
        threshold=sim.agreement_threshold,
        tol=config.tolerances,
        keep_paths=dump_count,
    )
    timings["simulate"] = time.perf_counter() - started
    fractions = [
        entry["fraction"] for entry in summary.details.values() if "agree" in entry
    ]
    passed = bool(fractions) and all(f >= sim.agreement_threshold for f in fractions)
    passed = passed and not summary.flags

    dumped = 0
    if summary.paths:
        dumped = len(write_paths(summary.paths, Path(config.output.dump_dir)))

    return Report(
        version=__version__,
        subcommand="verify",
        status="conclusive",
        exit_code=EXIT_OK if passed else EXIT_FLAGGED,
        config=config,
        classifier=classifier,
        simulation=SimulationSection(
            agreement=summary_section(summary),
            threshold=sim.agreement_threshold,
            passed=passed,
            flags=list(summary.flags),
            dumped_paths=dumped,
        ),
        timings=timings,
    )


def cmd_identities(
    config: RunConfig,
    *,
    settings: Optional[AppSettings] = None,
    threads: Optional[int] = None,
) -> Report:
    settings = settings or get_settings()
    sim = config.simulation
    ident = config.identities
    threads = min(threads or sim.threads, settings.max_threads)
    seed = sim.master_seed
    counts = ident.check_paths()
    bandwidth = sim.resolved_bandwidth()
    common: Dict[str, Any] = {
        "threads": threads,
        "block_size": sim.block_size,
        "settings": settings,
    }
    timings: Dict[str, float] = {}
    checks = []

    started = time.perf_counter()
    checks.append(
        check_section(
            "ray_knight",
            ray_knight_check(
                ident.r,
                ident.x0,
                ident.u,
                counts["ray_knight"],
                sim.dt,
                bandwidth,
                seed,
                significance=ident.significance,
                max_time=ident.max_time,
                **common,
            ),
        )
    )
    timings["ray_knight"] = time.perf_counter() - started

    started = time.perf_counter()
    checks.append(
        check_section(
            "williams",
            williams_check(
                ident.r,
                ident.x0,
                counts["williams"],
                sim.dt,
                seed,
                significance=ident.significance,
                max_time=ident.max_time,
                **common,
            ),
        )
    )
    timings["williams"] = time.perf_counter() - started

    started = time.perf_counter()
    for exponent in ident.cherny_exponents:
        checks.append(
            check_section(
                f"cherny_p{exponent:g}",
                cherny_dichotomy_check(
                    exponent,
                    ident.cherny_eps,
                    counts["cherny"],
                    sim.dt,
                    seed,
                    dyadic_count=ident.cherny_octaves,
                    threshold=sim.agreement_threshold,
                    **common,
                ),
            )
        )
    timings["cherny"] = time.perf_counter() - started

    started = time.perf_counter()
    for text in ident.fubini_integrands:
        checks.append(
            check_section(
                f"fubini[{text}]",
                fubini_mean_check(
                    parse_expr(text),
                    ident.r,
                    ident.x0,
                    counts["fubini"],
                    sim.dt,
                    seed,
                    significance=ident.significance,
                    **common,
                ),
            )
        )
    timings["fubini"] = time.perf_counter() - started

    started = time.perf_counter()
    checks.append(
        check_section(
            "occupation",
            occupation_check(
                parse_expr(ident.occupation_integrand),
                ident.r,
                ident.x0,
                counts["occupation"],
                sim.dt,
                bandwidth,
                seed,
                max_time=ident.max_time,
                **common,
            ),
        )
    )
    timings["occupation"] = time.perf_counter() - started

    started = time.perf_counter()
    checks.append(
        check_section(
            "local_time_positivity",
            local_time_positivity_check(
                ident.r - ident.u,
                ident.x0,
                ident.positivity_horizon,
                counts["local_time"],
                sim.dt,
                bandwidth,
                seed,
                significance=ident.significance,
                **common,
            ),
        )
    )
    timings["local_time_positivity"] = time.perf_counter() - started

    ok = all(c.passed and not c.underpowered for c in checks)
    return Report(
        version=__version__,
        subcommand="identities",
        status="conclusive" if ok else "inconclusive",
        exit_code=EXIT_OK if ok else EXIT_FLAGGED,
        config=config,
        identities=IdentitiesSection(significance=ident.significance, checks=checks),
        timings=timings,
    )


_COMMANDS = {
    "classify": cmd_classify,
    "verify": cmd_verify,
    "identities": cmd_identities,
}


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _print_human_summary(report: Report) -> None:
    print(f"=== {report.subcommand} ({report.status}, exit {report.exit_code}) ===")
    for error in report.errors:
        print(f"error: {error}")
    if report.classifier is not None:
        section = report.classifier
        reduction = section.reduction
        print(f"I = ({reduction.alpha:g}, {reduction.beta:g})  D = {reduction.D_points}")
        if section.recurrence is not None:
            print(f"Recurrence: {section.recurrence.kind}")
        if section.on_start_in_D:
            print(f"on_start_in_D: {section.on_start_in_D}")
        for name, event in section.events.items():
            print(f"- {name}: {event.kind}")
        for reason in section.blocking:
            print(f"  blocked by {reason}")
    if report.simulation is not None:
        sim = report.simulation
        if sim.agreement is not None:
            for event, entry in sim.agreement.details.items():
                fraction = entry.get("fraction")
                shown = f"{fraction:.1%}" if isinstance(fraction, float) else fraction
                print(
                    f"- {event}: agreement {shown} of {entry['n']} "
                    f"(undecided {entry['undecided']}, expected {entry['expected']})"
                )
        if sim.flags:
            print(f"Flags: {', '.join(sim.flags)}")
    if report.identities is not None:
        for check in report.identities.checks:
            status = "pass" if check.passed else "fail"
            extra = " (underpowered)" if check.underpowered else ""
            p_value = f" p={check.p_value:.4f}" if check.p_value is not None else ""
            print(f"- {check.name}: {status}{p_value}{extra}")


def _emit(report: Report, args: argparse.Namespace, out: Optional[Path]) -> None:
    text = report.to_json()
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
    if args.json:
        print(text)
    else:
        _print_human_summary(report)


def _error_report(command: str, message: str, config: Optional[RunConfig]) -> Report:
    return Report(
        version=__version__,
        subcommand=command,
        status="error",
        exit_code=EXIT_USAGE,
        config=config,
        errors=[message],
    )


def _run_command(args: argparse.Namespace, settings: AppSettings) -> int:
    config: Optional[RunConfig] = None
    try:
        config = load_problem(args.sample) if args.sample else load_config(args.config)
        config = config.with_overrides(seed=args.seed, paths=args.paths)
        out = args.out or (
            Path(config.output.report_path) if config.output.report_path else None
        )
        if args.command == "classify":
            report = cmd_classify(config, settings=settings)
        else:
            report = _COMMANDS[args.command](config, settings=settings, threads=args.threads)
    except (ConfigError, ProblemValidationError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        logger.error("run_failed command=%s error=%s", args.command, message)
        print(f"error: {message}", file=sys.stderr)
        report = _error_report(args.command, str(message), config)
        out = args.out
    _emit(report, args, out)

    if args.record or settings.record_runs:
        run_id = record_report(report, label=args.label or args.sample)
        logger.info("run_recorded id=%s", run_id)
    return report.exit_code


def _run_samples(args: argparse.Namespace) -> int:
    problems = list_problems()
    if args.json:
        print(json.dumps(problems, indent=2, sort_keys=True))
    else:
        for name, title in sorted(problems.items()):
            print(f"{name}: {title}")
    return EXIT_OK


def _selected_key(args: argparse.Namespace) -> Optional[str]:
    if args.problem is not None:
        return problem_key(load_config(args.problem))
    if args.sample is not None:
        return problem_key(load_problem(args.sample))
    return None


def _run_ledger(args: argparse.Namespace) -> int:
    if args.delete:
        if not delete_run(args.delete):
            print(f"error: run {args.delete} not found", file=sys.stderr)
            return EXIT_USAGE
        return EXIT_OK
    if args.show:
        record = get_run(args.show)
        if record is None:
            print(f"error: run {args.show} not found", file=sys.stderr)
            return EXIT_USAGE
        print(json.dumps(record, indent=2, sort_keys=True))
        return EXIT_OK
    try:
        key = _selected_key(args)
    except (ConfigError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        print(f"error: {message}", file=sys.stderr)
        return EXIT_USAGE
    if args.history:
        if key is None:
            print("error: --history needs --problem or --sample", file=sys.stderr)
            return EXIT_USAGE
        print(json.dumps(verdict_history(key), indent=2, sort_keys=True))
        return EXIT_OK
    for run in list_runs(limit=args.limit, problem_key=key):
        print(
            f"{run['id']}  {run['created_at']}  {run['subcommand']:<10} "
            f"{run['status']:<12} exit={run['exit_code']}  {(run['problem_key'] or '-')[:12]}  "
            f"{run['label'] or ''}"
        )
    return EXIT_OK


def _run_schema(args: argparse.Namespace) -> int:
    text = json.dumps(Report.model_json_schema(), indent=2, sort_keys=True)
    if args.out is not None:
        args.out.write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(list(argv) if argv is not None else None)
    settings = get_settings()
    logging.basicConfig(
        level=settings.log_level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    if getattr(args, "paths", None) is not None and args.paths < 1:
        parser.error("--paths must be at least 1")
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        if args.command == "samples":
            return _run_samples(args)
        if args.command == "runs":
            return _run_ledger(args)
        if args.command == "schema":
            return _run_schema(args)
        return _run_command(args, settings)
    except Exception:
        logger.exception("unexpected_failure command=%s", args.command)
        return EXIT_USAGE


def run() -> NoReturn:
    sys.exit(main())


__all__ = ["cmd_classify", "cmd_identities", "cmd_verify", "main"]


if __name__ == "__main__":
    run()
