"""Command-line entry point for the full pipeline.

Subcommands compose: ``profile`` output feeds ``select``, whose output
feeds ``evaluate``. Output is machine-readable JSON by default; pass
``--pretty`` for a human summary. Exit codes: 0 success, 1 usage error,
2 validation/format error, 3 infeasible or empty input, 4 solver timeout
(best incumbent still written), 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from .errors import (
    BlockedSetError,
    DegenerateConfigError,
    EmptyProfileError,
    GraphFormatError,
    InfeasibleAndNodeError,
    InfeasibleError,
    NoCompatibleGroupError,
    NotEnoughCandidatesError,
    NotEnoughEligibleTargetsError,
    TooManyCandidatesError,
    TruncatedProfileError,
    UnknownNodeError,
    ValidationError,
)
from .experiments import (
    GeneratorConfig,
    emit_aggregates_csv,
    emit_csv,
    emit_json,
    generate_graph,
    load_experiment_config,
    run_experiment,
)
from .graph import load_graph, load_scenario, save_graph
from .metrics import evaluate, report_row, rows_to_csv
from .paths import DEFAULT_PATH_CAP, build_threat_profile, load_profile, save_profile
from .schemes import (
    GroupParams,
    load_catalog,
    select_group,
    select_predecessor,
    select_random,
)
from .separator import (
    CostModel,
    SolverOptions,
    build_model,
    load_selection,
    save_selection,
    solve_optimal,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_TIMEOUT = 4
EXIT_IO = 5

_VALIDATION_ERRORS = (
    GraphFormatError,
    ValidationError,
    UnknownNodeError,
    BlockedSetError,
    InfeasibleAndNodeError,
    TruncatedProfileError,
    DegenerateConfigError,
)
_INFEASIBLE_ERRORS = (
    InfeasibleError,
    EmptyProfileError,
    NoCompatibleGroupError,
    NotEnoughCandidatesError,
    NotEnoughEligibleTargetsError,
    TooManyCandidatesError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _default_cap() -> int:
    return int(os.environ.get("DECOYPLAN_PATH_CAP", DEFAULT_PATH_CAP))


def _default_budget() -> float:
    return float(os.environ.get("DECOYPLAN_SOLVER_BUDGET", 60.0))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _emit(payload: dict, pretty: bool) -> None:
    if pretty:
        for key, value in payload.items():
            print(f"{key}: {value}")
    else:
        print(json.dumps(payload, indent=2))


def _build_parser() -> _Parser:
    parser = _Parser(prog="decoyplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a graph file")
    p.add_argument("graph")
    p.add_argument("--lenient", action="store_true", help="warn on unknown fields instead of failing")
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("profile", help="enumerate attack paths and build a threat profile")
    p.add_argument("--graph", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--closure", choices=["support", "direct", "recursive"], default="support",
                   help="closure mode: full precondition bundle, immediate and-gate "
                        "predecessors, or their transitive and-gate expansion")
    p.add_argument("--logical-reachability", action="store_true",
                   help="gate-aware reachability condition for direct/recursive closure")
    p.add_argument("--out", required=True)
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("select", help="pick a decoy set with one of the schemes")
    p.add_argument("--profile")
    p.add_argument("--graph")
    p.add_argument("--scenario")
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--scheme", required=True,
                   choices=["optimal", "predecessor", "random", "group"])
    p.add_argument("--beta", default="1", help="cost multiplier for mitigated techniques")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--catalog", help="group catalog file (group scheme)")
    p.add_argument("--k", type=int, default=None,
                   help="random scheme size; defaults to the optimal scheme's size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=float, default=None, help="solver time budget in seconds")
    p.add_argument("--out", required=True)
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("evaluate", help="score a selection against a profile")
    p.add_argument("--graph", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--profile", help="reuse a saved profile instead of re-enumerating")
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--force-truncated", action="store_true")
    p.add_argument("--csv", action="store_true", help="emit a flat CSV row instead of JSON")
    p.add_argument("--out")
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("generate", help="generate a synthetic attack graph")
    p.add_argument("--techniques", type=int, default=266)
    p.add_argument("--outcomes", type=int, default=153)
    p.add_argument("--and-fraction", type=float, default=0.2)
    p.add_argument("--mitigated-fraction", type=float, default=0.5)
    p.add_argument("--mean-out-degree", type=float, default=2.0)
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--allow-cycles", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("experiment", help="run a full multi-instance sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("dump-model", help="write the 0-1 linear model in LP format")
    p.add_argument("--profile")
    p.add_argument("--graph")
    p.add_argument("--scenario")
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--beta", default="1")
    p.add_argument("--out", required=True)
    p.add_argument("--pretty", action="store_true")

    return parser


def _load_profile_for(args) -> "ThreatProfile":
    if args.profile:
        return load_profile(args.profile)
    if not (args.graph and args.scenario):
        raise _UsageError("need either --profile or both --graph and --scenario")
    graph = load_graph(args.graph)
    scenario = load_scenario(args.scenario)
    cap = args.cap if args.cap is not None else _default_cap()
    return build_threat_profile(graph, scenario, cap)


def _cmd_validate(args) -> int:
    graph = load_graph(args.graph, strict=not args.lenient)
    _emit(
        {"valid": True, "nodes": len(graph.nodes), "edges": len(graph.edges)},
        args.pretty,
    )
    return EXIT_OK


def _cmd_profile(args) -> int:
    graph = load_graph(args.graph)
    scenario = load_scenario(args.scenario)
    cap = args.cap if args.cap is not None else _default_cap()
    profile = build_threat_profile(
        graph,
        scenario,
        cap,
        closure_mode=args.closure,
        logical=args.logical_reachability,
    )
    save_profile(profile, args.out)
    _emit(
        {
            "paths": len(profile.paths),
            "nodes": len(profile.graph.nodes),
            "edges": len(profile.graph.edges),
            "truncated": profile.truncated,
            "out": args.out,
        },
        args.pretty,
    )
    return EXIT_OK


def _cmd_select(args) -> int:
    profile = _load_profile_for(args)
    if args.scheme == "optimal":
        budget = args.budget if args.budget is not None else _default_budget()
        selection = solve_optimal(
            profile, CostModel(beta=Fraction(args.beta)), SolverOptions(time_budget=budget)
        )
    elif args.scheme == "predecessor":
        selection = select_predecessor(profile)
    elif args.scheme == "random":
        k = args.k
        if k is None:
            budget = args.budget if args.budget is not None else _default_budget()
            k = len(
                solve_optimal(
                    profile,
                    CostModel(beta=Fraction(args.beta)),
                    SolverOptions(time_budget=budget),
                ).decoys
            )
        selection = select_random(profile, k, args.seed)
    else:
        if not args.catalog:
            raise _UsageError("--scheme group needs --catalog")
        catalog = load_catalog(args.catalog)
        selection = select_group(
            profile, catalog, GroupParams(args.gamma, args.rho, args.seed)
        )
    save_selection(selection, args.out, created_at=_now())
    _emit(
        {
            "scheme": selection.scheme,
            "decoys": list(selection.sorted_decoys()),
            "cost": str(selection.cost),
            "optimal": selection.optimal,
            "out": args.out,
        },
        args.pretty,
    )
    if selection.scheme == "optimal" and not selection.optimal:
        print("warning: solver budget exhausted, wrote best incumbent", file=sys.stderr)
        return EXIT_TIMEOUT
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    graph = load_graph(args.graph)
    scenario = load_scenario(args.scenario)
    selection = load_selection(args.selection)
    if args.profile:
        profile = load_profile(args.profile)
    else:
        cap = args.cap if args.cap is not None else _default_cap()
        profile = build_threat_profile(graph, scenario, cap)
    report = evaluate(profile, graph, scenario, selection, force=args.force_truncated)
    if args.csv:
        row = report_row(report, selection, n_targets=len(scenario.targets))
        text = rows_to_csv([row])
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            print(text, end="")
        return EXIT_OK
    payload = {
        "scheme": selection.scheme,
        "interception_ratio": report.interception_ratio,
        "decoy_count": report.decoy_count,
        "unmitigated_ratio": report.unmitigated_ratio,
        "prevented_outcomes": report.prevented_outcomes,
        "and_per_decoy": report.and_intercepted_per_decoy,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _emit(payload, args.pretty)
    return EXIT_OK


def _cmd_generate(args) -> int:
    config = GeneratorConfig(
        n_techniques=args.techniques,
        n_outcomes=args.outcomes,
        and_fraction=args.and_fraction,
        mitigated_fraction=args.mitigated_fraction,
        mean_out_degree=args.mean_out_degree,
        layers=args.layers,
        allow_cycles=args.allow_cycles,
        seed=args.seed,
    )
    graph = generate_graph(config)
    save_graph(graph, args.out)
    _emit({"nodes": len(graph.nodes), "edges": len(graph.edges), "out": args.out}, args.pretty)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    config = load_experiment_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config, profile_dir=out_dir / "profiles")
    emit_csv(result, out_dir / "results.csv")
    emit_aggregates_csv(result, out_dir / "aggregates.csv")
    emit_json(result, out_dir / "results.json", created_at=_now())
    _emit(
        {
            "rows": len(result.rows),
            "infeasible": result.infeasible_count,
            "truncated": result.truncated_count,
            "timeouts": result.timeout_count,
            "out_dir": str(out_dir),
        },
        args.pretty,
    )
    return EXIT_OK


def _cmd_dump_model(args) -> int:
    profile = _load_profile_for(args)
    model = build_model(profile, CostModel(beta=Fraction(args.beta)))
    Path(args.out).write_text(model.to_lp(), encoding="utf-8")
    _emit(
        {
            "variables": len(model.variables),
            "constraints": len(model.constraints),
            "out": args.out,
        },
        args.pretty,
    )
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "profile": _cmd_profile,
    "select": _cmd_select,
    "evaluate": _cmd_evaluate,
    "generate": _cmd_generate,
    "experiment": _cmd_experiment,
    "dump-model": _cmd_dump_model,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _INFEASIBLE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
