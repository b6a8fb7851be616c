"""Command-line front end.

Subcommands: generate, ingest, run, validate, solve-exact, and the
experiment suites. Exit codes: 0 success, 1 usage error, 2 validation
failure, 3 exact-solver cap exceeded. Table output is always rendered
from the same structured document that json output serializes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import engine, exact, workload
from .model import (
    Scenario,
    encode_action,
    load_scenario,
    save_scenario,
    scenario_to_dict,
    validate_config,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_CAP = 3


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _load_scenario_arg(path: str) -> Scenario:
    return load_scenario(path)


def _cmd_generate(args: argparse.Namespace) -> int:
    spec = workload.GenSpec(
        num_devices=args.devices,
        class_combo=tuple(args.classes.split(",")),
        mobile_fraction=args.mobile_fraction,
        seed=args.seed,
    )
    try:
        scenario = workload.generate(spec)
    except workload.GenerationError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.out:
        save_scenario(scenario, args.out)
    else:
        print(json.dumps(_scenario_doc(scenario), indent=2, sort_keys=True))
    return EXIT_OK


def _scenario_doc(scenario: Scenario) -> dict:
    return scenario_to_dict(scenario)


def _cmd_ingest(args: argparse.Namespace) -> int:
    if args.sessions == "bundled":
        text = workload.bundled_replica_text()
        records, skipped = workload.parse_sessions(text)
    else:
        records, skipped = workload.load_sessions(args.sessions)
    spec = workload.IngestSpec(seed=args.seed, mobile_fraction=args.mobile_fraction)
    scenario, dropped = workload.ingest_sessions(records, spec)
    if skipped or dropped:
        print(f"skipped {skipped} records, dropped {dropped} sessions", file=sys.stderr)
    if args.out:
        save_scenario(scenario, args.out)
    else:
        print(json.dumps(_scenario_doc(scenario), indent=2, sort_keys=True))
    return EXIT_OK


def _mobility_arg(value: str | None) -> bool | None:
    if value is None:
        return None
    return value == "on"


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(args.scenario)
    try:
        result = engine.run(scenario, args.scheduler, mobility=_mobility_arg(args.mobility))
    except engine.InvalidScenarioError as exc:
        print(f"scenario invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except engine.InfeasibleRunError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    if args.format == "table":
        _write_or_print(_render_run_table(result), args.out)
    else:
        text = json.dumps(result.to_dict(), indent=2, sort_keys=True)
        _write_or_print(text + "\n", args.out)
    return EXIT_OK


def _render_run_table(result: engine.RunResult) -> str:
    doc = result.to_dict()
    lines = [
        f"scenario   {doc['scenario_id']}",
        f"scheduler  {doc['scheduler']} (mobility={'on' if doc['mobility_enabled'] else 'off'})",
        f"total loss {doc['total_loss']:.4f}",
        "",
        "device\tloss\tprogress_kwh\tcompleted",
    ]
    for dev_id, row in doc["per_device"].items():
        lines.append(
            f"{dev_id}\t{row['loss_total']:.4f}\t{row['progress_kwh']:.2f}"
            f"\t{'yes' if row['completed'] else 'no'}"
        )
    return "\n".join(lines) + "\n"


def _cmd_validate(args: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(args.scenario)
    doc = json.loads(Path(args.result).read_text())
    decisions = engine.decisions_from_dict(doc)
    try:
        report = exact.validate_schedule(decisions, scenario.config, list(scenario.devices))
    except exact.ScheduleFormatError as exc:
        print(f"malformed schedule: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(report.summary())
    return EXIT_OK if report.all_pass else EXIT_VALIDATION


def _cmd_solve_exact(args: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(args.scenario)
    violations = validate_config(scenario.config, scenario.devices)
    if violations:
        for v in violations:
            print(str(v), file=sys.stderr)
        return EXIT_VALIDATION
    instance = exact.ExactInstance(scenario, exact.ExactCaps(node_budget=args.node_budget))
    try:
        result = exact.solve_exact(instance)
    except exact.CapExceededError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CAP
    doc = {
        "scenario_id": scenario.scenario_id,
        "optimal_loss": result.loss,
        "nodes": result.nodes,
        "decisions": {
            dev_id: [encode_action(a) for a in row]
            for dev_id, row in sorted(result.decisions.items())
        },
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    _write_or_print(text + "\n", args.out)
    return EXIT_OK


def _cmd_experiment(args: argparse.Namespace) -> int:
    if args.suite == "mobility-delta":
        counts = [int(c) for c in args.counts.split(",")]
        specs = engine.sample_grid(counts, args.samples, seed=args.seed)
        summary = engine.mobility_delta_experiment(specs)
        if args.format == "table":
            _write_or_print(engine.metrics_table(summary), args.out)
        else:
            text = json.dumps(summary.to_dict(), indent=2, sort_keys=True)
            _write_or_print(text + "\n", args.out)
        return EXIT_OK

    if args.suite == "baseline-compare":
        if not args.scenario:
            print("baseline-compare needs --scenario", file=sys.stderr)
            return EXIT_USAGE
        scenario = _load_scenario_arg(args.scenario)
        results = engine.baseline_compare(scenario)
        report = engine.improvement_report(results)
        doc = {
            "scenario_id": scenario.scenario_id,
            "losses": {name: r.total_loss for name, r in results.items()},
            "improvement_pct": report,
        }
        if args.format == "table":
            lines = [f"scenario {scenario.scenario_id}"]
            for name, loss in doc["losses"].items():
                lines.append(f"{name}\t{loss:.2f}")
            for name, pct in report.items():
                shown = f"{pct:.2f}%" if isinstance(pct, float) else pct
                lines.append(f"improvement over {name}\t{shown}")
            _write_or_print("\n".join(lines) + "\n", args.out)
        else:
            _write_or_print(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
        return EXIT_OK

    if args.suite == "oracle-gap":
        try:
            report = engine.oracle_gap_experiment(args.samples, seed=args.seed)
        except exact.CapExceededError as exc:
            print(f"refused: {exc}", file=sys.stderr)
            return EXIT_CAP
        doc = {
            "rows": [r.__dict__ for r in report.rows],
            "median_ratio": report.median_ratio,
            "max_ratio": report.max_ratio,
        }
        if args.format == "table":
            lines = ["scenario\texact\theuristic\tratio"]
            for r in report.rows:
                lines.append(
                    f"{r.scenario_id}\t{r.exact_loss:.4f}\t{r.heuristic_loss:.4f}\t{r.ratio:.3f}"
                )
            lines.append(f"median ratio\t{report.median_ratio:.3f}")
            lines.append(f"max ratio\t{report.max_ratio:.3f}")
            _write_or_print("\n".join(lines) + "\n", args.out)
        else:
            _write_or_print(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
        return EXIT_OK

    print(f"unknown experiment suite {args.suite!r}", file=sys.stderr)
    return EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridflex",
        description="Multi-aggregator demand-side scheduling simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate a synthetic scenario")
    p_gen.add_argument("--devices", type=int, required=True)
    p_gen.add_argument("--classes", default="L,L,M,M,H", help="comma-separated load classes")
    p_gen.add_argument("--mobile-fraction", type=float, default=0.5)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", default=None)
    p_gen.set_defaults(func=_cmd_generate)

    p_ing = sub.add_parser("ingest", help="ingest charging session records")
    p_ing.add_argument("sessions", help="CSV path, or 'bundled' for the packaged replica")
    p_ing.add_argument("--seed", type=int, default=0)
    p_ing.add_argument("--mobile-fraction", type=float, default=0.5)
    p_ing.add_argument("--out", default=None)
    p_ing.set_defaults(func=_cmd_ingest)

    p_run = sub.add_parser("run", help="run one scheduler over a scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("--scheduler", choices=sorted(engine.baselines.SCHEDULERS), default="heuristic")
    p_run.add_argument("--mobility", choices=["on", "off"], default=None)
    p_run.add_argument("--format", choices=["json", "table"], default="json")
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a run result against a scenario")
    p_val.add_argument("scenario")
    p_val.add_argument("result")
    p_val.set_defaults(func=_cmd_validate)

    p_exact = sub.add_parser("solve-exact", help="exact optimum for a micro scenario")
    p_exact.add_argument("scenario")
    p_exact.add_argument("--node-budget", type=int, default=10**8)
    p_exact.add_argument("--out", default=None)
    p_exact.set_defaults(func=_cmd_solve_exact)

    p_exp = sub.add_parser("experiment", help="run an experiment suite")
    p_exp.add_argument("suite", choices=["mobility-delta", "baseline-compare", "oracle-gap"])
    p_exp.add_argument("--counts", default="20,40,60,80,100")
    p_exp.add_argument("--samples", type=int, default=10)
    p_exp.add_argument("--seed", type=int, default=0)
    p_exp.add_argument("--scenario", default=None)
    p_exp.add_argument("--format", choices=["json", "table"], default="json")
    p_exp.add_argument("--out", default=None)
    p_exp.set_defaults(func=_cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
