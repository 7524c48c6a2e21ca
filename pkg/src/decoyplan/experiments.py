"""Synthetic attack graphs, scenario sampling, and the multi-instance sweep.

The real technique graph behind the measurements in the literature is not
redistributable, so experiments run on generated graphs that mimic its
shape: a designated root outcome (the "user rights" foothold) sits in
layer 0 and, by construction, reaches every other node; techniques and
outcomes spread over later layers with geometric in-degrees; gates and
mitigation flags are assigned by configured fractions. Everything is
derived deterministically from seeds, and per-instance seeds split off
the master seed through SHA-256, so a sweep is reproducible byte for byte
(timing fields aside).
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    DegenerateConfigError,
    EmptyProfileError,
    GraphFormatError,
    InfeasibleError,
    NoCompatibleGroupError,
    NotEnoughCandidatesError,
    NotEnoughEligibleTargetsError,
    ValidationError,
)
from .graph import AttackGraph, GateType, Node, NodeKind, Scenario, _load_json
from .metrics import REPORT_COLUMNS, evaluate, format_cell, rows_to_csv
from .paths import DEFAULT_PATH_CAP, build_threat_profile, save_profile
from .schemes import (
    GroupCatalog,
    GroupParams,
    load_catalog,
    select_group,
    select_predecessor,
    select_random,
)
from .separator import CostModel, SolverOptions, solve_optimal

ROOT_OUTCOME_ID = "o000"

METRIC_FIELDS = (
    "interception_ratio",
    "decoy_count",
    "unmitigated_ratio",
    "prevented_outcomes",
    "and_per_decoy",
    "solve_seconds",
)

_GENERATOR_FIELDS = {
    "n_techniques",
    "n_outcomes",
    "and_fraction",
    "mitigated_fraction",
    "mean_out_degree",
    "layers",
    "allow_cycles",
    "seed",
}
_SCHEME_FIELDS = {"scheme", "label", "beta", "gamma", "rho", "k", "catalog"}
_CONFIG_FIELDS = {
    "generator",
    "n_instances",
    "target_counts",
    "schemes",
    "source",
    "path_cap",
    "master_seed",
    "shared_graph",
    "max_workers",
    "solver_budget",
    "dump_profiles",
}


@dataclass(frozen=True)
class GeneratorConfig:
    """Shape parameters for synthetic graphs.

    ``mean_out_degree`` steers the expected number of edges per node (the
    generator draws in-degrees with that mean, which amounts to the same
    edge budget). Outcomes other than the root live in layers >= 2 because
    their predecessors must be techniques.
    """

    n_techniques: int = 266
    n_outcomes: int = 153
    and_fraction: float = 0.2
    mitigated_fraction: float = 0.5
    mean_out_degree: float = 2.0
    layers: int = 8
    allow_cycles: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.n_techniques < 1:
            raise DegenerateConfigError("need at least one technique")
        if self.n_outcomes < 1:
            raise DegenerateConfigError("need at least one outcome (the root)")
        if self.layers < 1:
            raise DegenerateConfigError("need at least one layer")
        if self.n_outcomes > 1 and self.layers < 2:
            raise DegenerateConfigError("outcomes beyond the root need layers >= 2")
        for name in ("and_fraction", "mitigated_fraction"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise DegenerateConfigError(f"{name} must be in [0, 1]")
        if self.mean_out_degree < 1:
            raise DegenerateConfigError("mean_out_degree must be >= 1")
        if self.seed < 0:
            raise DegenerateConfigError("seed must be non-negative")


def _geometric_extra(rng: random.Random, mean_degree: float, cap: int = 6) -> int:
    """Extra parents beyond the mandatory one; geometric with mean m-1, capped."""
    if mean_degree <= 1:
        return 0
    p = 1.0 / float(mean_degree)
    u = rng.random()
    return min(cap, int(math.log(1.0 - u) / math.log(1.0 - p)))


def generate_graph(config: GeneratorConfig) -> AttackGraph:
    """Deterministic layered graph with a root outcome that reaches everything.

    Every node takes at least one parent from an earlier layer, outcomes
    only from techniques, so the whole graph is logically reachable from
    the root: or-nodes inherit reachability through their first parent and
    and-nodes draw all parents from already-reachable nodes.
    """
    config.validate()
    rng = random.Random(config.seed)

    outcome_ids = [f"o{i:03d}" for i in range(config.n_outcomes)]
    technique_ids = [f"t{i:03d}" for i in range(config.n_techniques)]
    root = outcome_ids[0]

    layer: dict[str, int] = {root: 0}
    for oid in outcome_ids[1:]:
        layer[oid] = rng.randint(2, config.layers)
    # The first technique anchors layer 1 so every outcome has a pool.
    for idx, tid in enumerate(technique_ids):
        layer[tid] = 1 if idx == 0 else rng.randint(1, config.layers)

    gate: dict[str, GateType] = {}
    for nid in outcome_ids + technique_ids:
        gate[nid] = GateType.AND if rng.random() < config.and_fraction else GateType.OR
    mitigated: dict[str, bool] = {}
    for tid in technique_ids:
        mitigated[tid] = rng.random() < config.mitigated_fraction

    by_layer: dict[int, list[str]] = {}
    for nid, lvl in layer.items():
        by_layer.setdefault(lvl, []).append(nid)

    edges: list[tuple[str, str]] = []
    technique_set = set(technique_ids)
    earlier_all: list[str] = []
    earlier_techniques: list[str] = []
    for lvl in range(0, config.layers + 1):
        members = sorted(by_layer.get(lvl, []))
        for nid in members:
            if nid == root:
                continue
            pool = earlier_all if nid in technique_set else earlier_techniques
            want = 1 + _geometric_extra(rng, config.mean_out_degree)
            want = min(want, len(pool))
            for parent in rng.sample(pool, want):
                edges.append((parent, nid))
        earlier_all.extend(members)
        earlier_techniques.extend(m for m in members if m in technique_set)

    if config.allow_cycles:
        all_ids = sorted(layer)
        extra = max(1, round(0.03 * len(all_ids)))
        added = 0
        existing = set(edges)
        for _ in range(extra * 20):
            if added == extra:
                break
            u = rng.choice(all_ids)
            v = rng.choice(all_ids)
            if u == v or (u, v) in existing:
                continue
            if u not in technique_set and v not in technique_set:
                continue
            existing.add((u, v))
            edges.append((u, v))
            added += 1

    nodes = [
        Node(
            id=nid,
            name=nid,
            kind=NodeKind.TECHNIQUE if nid in technique_set else NodeKind.OUTCOME,
            gate=gate[nid],
            mitigated=mitigated.get(nid, False),
        )
        for nid in sorted(layer)
    ]
    return AttackGraph(nodes, edges)


def sample_scenario(
    graph: AttackGraph, n_targets: int, seed: int, source: str = ROOT_OUTCOME_ID
) -> Scenario:
    """Single-source scenario with a uniform sample of reachable outcomes."""
    graph.node(source)
    if n_targets < 1:
        raise ValidationError("n_targets must be positive")
    reach = graph.plain_reachable(source)
    eligible = sorted(
        o for o in graph.outcome_ids() if o != source and o in reach
    )
    if len(eligible) < n_targets:
        raise NotEnoughEligibleTargetsError(
            f"only {len(eligible)} eligible outcomes, asked for {n_targets}"
        )
    rng = random.Random(seed)
    return Scenario(frozenset({source}), frozenset(rng.sample(eligible, n_targets)))


# -- sweep configuration -----------------------------------------------------


@dataclass(frozen=True)
class SchemeSpec:
    """One scheme entry of a sweep; ``label`` keys the output rows."""

    scheme: str
    label: str | None = None
    beta: Fraction = Fraction(1)
    gamma: float = 0.0
    rho: float = 1.0
    k: int | None = None
    catalog: GroupCatalog | None = None

    def __post_init__(self):
        if self.scheme not in {"optimal", "predecessor", "random", "group"}:
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "beta", Fraction(self.beta))

    @property
    def row_label(self) -> str:
        return self.label if self.label is not None else self.scheme


def default_schemes() -> tuple[SchemeSpec, ...]:
    return (
        SchemeSpec("optimal"),
        SchemeSpec("predecessor"),
        SchemeSpec("random"),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    n_instances: int = 100
    target_counts: tuple[int, ...] = tuple(range(1, 10))
    schemes: tuple[SchemeSpec, ...] = field(default_factory=default_schemes)
    source: str = ROOT_OUTCOME_ID
    path_cap: int | None = DEFAULT_PATH_CAP
    master_seed: int = 0
    shared_graph: bool = True
    max_workers: int = 1
    solver_budget: float | None = 60.0
    dump_profiles: bool = False

    def validate(self) -> None:
        self.generator.validate()
        if self.n_instances < 1:
            raise ValidationError("n_instances must be positive")
        if not self.target_counts:
            raise ValidationError("target_counts must not be empty")
        if not self.schemes:
            raise ValidationError("schemes must not be empty")
        labels = [s.row_label for s in self.schemes]
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate scheme labels: {sorted(labels)}")
        seen_optimal = False
        for spec in self.schemes:
            if spec.scheme == "optimal":
                seen_optimal = True
            if spec.scheme == "random" and spec.k is None and not seen_optimal:
                raise ValidationError(
                    "a random scheme without explicit k needs an optimal scheme before it"
                )
            if spec.scheme == "group" and spec.catalog is None:
                raise ValidationError("group scheme needs a catalog")
        if self.max_workers < 1:
            raise ValidationError("max_workers must be positive")


def instance_seed(master_seed: int, target_count: int, index: int, tag: str = "scenario") -> int:
    """Documented splitting rule: SHA-256 over the tuple, first 8 bytes."""
    digest = hashlib.sha256(
        f"{master_seed}:{target_count}:{index}:{tag}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    aggregates: list[dict]
    infeasible_count: int = 0
    truncated_count: int = 0
    scheme_skip_count: int = 0
    timeout_count: int = 0
    instance_seeds: list[tuple[int, int, int]] = field(default_factory=list)


def _run_instance(
    graph: AttackGraph,
    config: ExperimentConfig,
    target_count: int,
    index: int,
    profile_dir: Path | None = None,
):
    """Rows for one instance, or an incident marker ('infeasible' / 'truncated')."""
    seed = instance_seed(config.master_seed, target_count, index)
    if not config.shared_graph:
        graph = generate_graph(
            replace(config.generator, seed=instance_seed(config.master_seed, target_count, index, "graph"))
        )
    scenario = sample_scenario(graph, target_count, seed, config.source)
    profile = build_threat_profile(graph, scenario, config.path_cap)
    if profile_dir is not None:
        save_profile(profile, profile_dir / f"profile_t{target_count}_i{index:04d}.json")
    if profile.truncated:
        return "truncated", seed, []
    rows: list[dict] = []
    skips = 0
    timeouts = 0
    first_optimal_size: int | None = None
    for spec in config.schemes:
        try:
            if spec.scheme == "optimal":
                selection = solve_optimal(
                    profile,
                    CostModel(beta=spec.beta),
                    SolverOptions(time_budget=config.solver_budget),
                )
                if not selection.optimal:
                    timeouts += 1
                if first_optimal_size is None:
                    first_optimal_size = len(selection.decoys)
            elif spec.scheme == "predecessor":
                selection = select_predecessor(profile)
            elif spec.scheme == "random":
                k = spec.k if spec.k is not None else first_optimal_size
                selection = select_random(profile, k, seed)
            else:
                selection = select_group(
                    profile, spec.catalog, GroupParams(spec.gamma, spec.rho, seed)
                )
        except (InfeasibleError, EmptyProfileError):
            return "infeasible", seed, []
        except (NoCompatibleGroupError, NotEnoughCandidatesError):
            skips += 1
            continue
        report = evaluate(profile, graph, scenario, selection)
        unmitigated = sum(
            1 for d in selection.decoys if not graph.nodes[d].mitigated
        )
        rows.append(
            {
                "scheme": spec.row_label,
                "beta": spec.beta if spec.scheme == "optimal" else None,
                "gamma": spec.gamma if spec.scheme == "group" else None,
                "rho": spec.rho if spec.scheme == "group" else None,
                "seed": seed,
                "n_targets": target_count,
                "instance": index,
                "interception_ratio": report.interception_ratio,
                "decoy_count": report.decoy_count,
                "unmitigated_ratio": report.unmitigated_ratio,
                "prevented_outcomes": report.prevented_outcomes,
                "and_per_decoy": report.and_intercepted_per_decoy,
                "solve_seconds": selection.solve_seconds,
                "proven_optimal": selection.optimal if spec.scheme == "optimal" else None,
                "cost": str(selection.cost),
                "unmitigated_count": unmitigated,
            }
        )
    return ("ok", seed, rows, skips, timeouts)


def aggregate(rows: Iterable[Mapping]) -> list[dict]:
    """Mean and population standard deviation per (scheme, target_count, metric)."""
    grouped: dict[tuple[str, int], list[Mapping]] = {}
    for row in rows:
        grouped.setdefault((row["scheme"], row["n_targets"]), []).append(row)
    out = []
    for (scheme, n_targets) in sorted(grouped):
        bucket = grouped[(scheme, n_targets)]
        for metric in METRIC_FIELDS:
            values = [float(r[metric]) for r in bucket if r[metric] is not None]
            out.append(
                {
                    "scheme": scheme,
                    "n_targets": n_targets,
                    "metric": metric,
                    "mean": statistics.fmean(values) if values else None,
                    "std": statistics.pstdev(values) if values else None,
                    "n": len(values),
                }
            )
    return out


def run_experiment(
    config: ExperimentConfig, profile_dir: str | Path | None = None
) -> ExperimentResult:
    """Run the sweep: every (target_count, instance) pair, every scheme.

    Random schemes without an explicit k are sized from the instance's
    first optimal selection. Infeasible or truncated instances are
    recorded as incidents and excluded from aggregates. Instance-level
    parallelism (``max_workers``) merges results in task order, so output
    is identical to a serial run. With ``config.dump_profiles`` every
    instance's threat profile is also written under ``profile_dir``.
    """
    config.validate()
    if config.dump_profiles and profile_dir is not None:
        profile_dir = Path(profile_dir)
        profile_dir.mkdir(parents=True, exist_ok=True)
    else:
        profile_dir = None
    shared = generate_graph(config.generator) if config.shared_graph else None
    tasks = [(tc, i) for tc in config.target_counts for i in range(config.n_instances)]

    def work(task):
        tc, i = task
        return _run_instance(shared, config, tc, i, profile_dir)

    if config.max_workers > 1:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            outcomes = list(pool.map(work, tasks))
    else:
        outcomes = [work(t) for t in tasks]

    result = ExperimentResult(config=config, rows=[], aggregates=[])
    for (tc, i), outcome in zip(tasks, outcomes):
        status, seed = outcome[0], outcome[1]
        result.instance_seeds.append((tc, i, seed))
        if status == "infeasible":
            result.infeasible_count += 1
            continue
        if status == "truncated":
            result.truncated_count += 1
            continue
        _, _, rows, skips, timeouts = outcome
        result.rows.extend(rows)
        result.scheme_skip_count += skips
        result.timeout_count += timeouts
    result.aggregates = aggregate(result.rows)
    return result


# -- emission ----------------------------------------------------------------


def result_rows_csv(result: ExperimentResult) -> str:
    rows = [
        {column: format_cell(row.get(column)) for column in REPORT_COLUMNS}
        for row in result.rows
    ]
    return rows_to_csv(rows)


AGGREGATE_COLUMNS = ("scheme", "n_targets", "metric", "mean", "std", "n")


def aggregates_csv(result: ExperimentResult) -> str:
    lines = [",".join(AGGREGATE_COLUMNS)]
    for entry in result.aggregates:
        lines.append(",".join(format_cell(entry[c]) for c in AGGREGATE_COLUMNS))
    return "\n".join(lines) + "\n"


def _config_to_dict(config: ExperimentConfig) -> dict:
    gen = config.generator
    return {
        "generator": {
            "n_techniques": gen.n_techniques,
            "n_outcomes": gen.n_outcomes,
            "and_fraction": gen.and_fraction,
            "mitigated_fraction": gen.mitigated_fraction,
            "mean_out_degree": gen.mean_out_degree,
            "layers": gen.layers,
            "allow_cycles": gen.allow_cycles,
            "seed": gen.seed,
        },
        "n_instances": config.n_instances,
        "target_counts": list(config.target_counts),
        "schemes": [
            {
                "scheme": s.scheme,
                "label": s.row_label,
                "beta": str(s.beta),
                "gamma": s.gamma,
                "rho": s.rho,
                "k": s.k,
            }
            for s in config.schemes
        ],
        "source": config.source,
        "path_cap": config.path_cap,
        "master_seed": config.master_seed,
        "shared_graph": config.shared_graph,
        "max_workers": config.max_workers,
        "solver_budget": config.solver_budget,
        "dump_profiles": config.dump_profiles,
    }


def result_to_dict(result: ExperimentResult, created_at: str | None = None) -> dict:
    rows = []
    for row in result.rows:
        out = dict(row)
        if out["beta"] is not None:
            out["beta"] = str(out["beta"])
        rows.append(out)
    data = {
        "version": 1,
        "config": _config_to_dict(result.config),
        "rows": rows,
        "aggregates": result.aggregates,
        "incidents": {
            "infeasible": result.infeasible_count,
            "truncated": result.truncated_count,
            "scheme_skips": result.scheme_skip_count,
            "timeouts": result.timeout_count,
        },
        "instance_seeds": [list(t) for t in result.instance_seeds],
    }
    if created_at is not None:
        data["meta"] = {"created_at": created_at}
    return data


def emit_csv(result: ExperimentResult, path: str | Path) -> None:
    Path(path).write_text(result_rows_csv(result), encoding="utf-8")


def emit_aggregates_csv(result: ExperimentResult, path: str | Path) -> None:
    Path(path).write_text(aggregates_csv(result), encoding="utf-8")


def emit_json(result: ExperimentResult, path: str | Path, created_at: str | None = None) -> None:
    Path(path).write_text(
        json.dumps(result_to_dict(result, created_at), indent=2) + "\n", encoding="utf-8"
    )


# -- config file -------------------------------------------------------------


def parse_experiment_config(
    document: str | bytes, base_dir: str | Path | None = None
) -> ExperimentConfig:
    data = _load_json(document)
    if not isinstance(data, dict):
        raise GraphFormatError("experiment config must be an object")
    unknown = sorted(set(data) - _CONFIG_FIELDS)
    if unknown:
        raise GraphFormatError(f"unknown field(s) {unknown} in experiment config")

    gen_data = data.get("generator", {})
    if not isinstance(gen_data, dict):
        raise GraphFormatError("'generator' must be an object")
    unknown = sorted(set(gen_data) - _GENERATOR_FIELDS)
    if unknown:
        raise GraphFormatError(f"unknown field(s) {unknown} in generator config")
    generator = GeneratorConfig(**gen_data)

    schemes = []
    for entry in data.get("schemes", [s.__dict__ for s in default_schemes()]):
        if not isinstance(entry, dict):
            raise GraphFormatError(f"scheme entry {entry!r} is not an object")
        unknown = sorted(set(entry) - _SCHEME_FIELDS)
        if unknown:
            raise GraphFormatError(f"unknown field(s) {unknown} in scheme entry")
        catalog = None
        if "catalog" in entry and entry["catalog"] is not None:
            catalog_path = Path(entry["catalog"])
            if base_dir is not None and not catalog_path.is_absolute():
                catalog_path = Path(base_dir) / catalog_path
            catalog = load_catalog(catalog_path)
        schemes.append(
            SchemeSpec(
                scheme=entry.get("scheme"),
                label=entry.get("label"),
                beta=Fraction(str(entry.get("beta", 1))),
                gamma=entry.get("gamma", 0.0),
                rho=entry.get("rho", 1.0),
                k=entry.get("k"),
                catalog=catalog,
            )
        )

    config = ExperimentConfig(
        generator=generator,
        n_instances=data.get("n_instances", 100),
        target_counts=tuple(data.get("target_counts", range(1, 10))),
        schemes=tuple(schemes),
        source=data.get("source", ROOT_OUTCOME_ID),
        path_cap=data.get("path_cap", DEFAULT_PATH_CAP),
        master_seed=data.get("master_seed", 0),
        shared_graph=data.get("shared_graph", True),
        max_workers=data.get("max_workers", 1),
        solver_budget=data.get("solver_budget", 60.0),
        dump_profiles=data.get("dump_profiles", False),
    )
    config.validate()
    return config


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_experiment_config(path.read_bytes(), base_dir=path.parent)
