"""Evaluation of a decoy selection against a threat profile.

Five measurements:

* interception ratio - share of enumerated attack paths that contain at
  least one decoy-exposed technique (1.0 on a pathless profile: there is
  nothing left to intercept);
* decoy count - size of the selection;
* unmitigated ratio - share of selected techniques without an available
  mitigation (undefined for an empty selection);
* prevented outcomes - outcomes outside the attack targets that become
  unreachable once the decoys are treated as blockers, measured on the
  full graph because such collateral outcomes usually sit outside the
  profile;
* and-interception per decoy - and-gated profile nodes neutralized by the
  selection, normalized by the number of decoys (undefined for an empty
  selection).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import TruncatedProfileError, ValidationError
from .graph import AttackGraph, GateType, NodeKind, Scenario
from .paths import ThreatProfile
from .separator import DecoySelection

REPORT_COLUMNS = (
    "scheme",
    "beta",
    "gamma",
    "rho",
    "seed",
    "n_targets",
    "interception_ratio",
    "decoy_count",
    "unmitigated_ratio",
    "prevented_outcomes",
    "and_per_decoy",
    "solve_seconds",
)


@dataclass(frozen=True)
class MetricsReport:
    interception_ratio: float
    decoy_count: int
    unmitigated_ratio: float | None
    prevented_outcomes: int
    and_intercepted_per_decoy: float | None


def interception_ratio(
    profile: ThreatProfile, decoys: Iterable[str], force: bool = False
) -> float:
    """Share of attack paths containing at least one decoy."""
    if profile.truncated and not force:
        raise TruncatedProfileError(
            "profile path enumeration was capped; pass force=True to evaluate anyway"
        )
    decoys = frozenset(decoys)
    if not profile.paths:
        return 1.0
    hit = sum(1 for p in profile.paths if p.node_set & decoys)
    return hit / len(profile.paths)


def unmitigated_ratio(graph: AttackGraph, decoys: Iterable[str]) -> float | None:
    """Share of selected techniques without a mitigation; None when empty."""
    decoys = frozenset(decoys)
    if not decoys:
        return None
    for d in decoys:
        if graph.node(d).kind is not NodeKind.TECHNIQUE:
            raise ValidationError(f"decoy {d!r} is not a technique node")
    unmitigated = sum(1 for d in decoys if not graph.nodes[d].mitigated)
    return unmitigated / len(decoys)


def prevented_outcomes(
    full_graph: AttackGraph, scenario: Scenario, decoys: Iterable[str]
) -> int:
    """Outcomes outside the targets that the decoys make unreachable.

    Counted on the full graph: an outcome counts when it was reachable
    from some source and is unreachable from every source once the decoys
    are blocked.
    """
    decoys = frozenset(decoys)
    sources = scenario.sorted_sources()
    before = {s: full_graph.logical_reachable(s) for s in sources}
    after = {s: full_graph.logical_reachable(s, decoys) for s in sources}
    count = 0
    for outcome in full_graph.outcome_ids():
        if outcome in scenario.targets:
            continue
        was = any(outcome in before[s] for s in sources)
        now = any(outcome in after[s] for s in sources)
        if was and not now:
            count += 1
    return count


def and_interception(
    profile: ThreatProfile, scenario: Scenario, decoys: Iterable[str]
) -> float | None:
    """And-gated profile nodes neutralized by the decoys, per decoy.

    A node counts when it was reachable from some source in the profile
    and no longer is once the decoys are blocked. None for an empty
    selection.
    """
    decoys = frozenset(decoys)
    if not decoys:
        return None
    graph = profile.graph
    sources = [s for s in sorted(scenario.sources) if s in graph]
    blocked = frozenset(d for d in decoys if d in graph)
    before = {s: graph.logical_reachable(s) for s in sources}
    after = {s: graph.logical_reachable(s, blocked) for s in sources}
    neutralized = 0
    for node_id, node in graph.nodes.items():
        if node.gate is not GateType.AND:
            continue
        was = any(node_id in before[s] for s in sources)
        now = any(node_id in after[s] for s in sources)
        if was and not now:
            neutralized += 1
    return neutralized / len(decoys)


def and_predecessor_touches(profile: ThreatProfile, decoys: Iterable[str]) -> int:
    """Diagnostic variant: and-gated nodes with at least one decoy predecessor."""
    decoys = frozenset(decoys)
    graph = profile.graph
    return sum(
        1
        for node_id, node in graph.nodes.items()
        if node.gate is GateType.AND and graph.predecessors(node_id) & decoys
    )


def evaluate(
    profile: ThreatProfile,
    full_graph: AttackGraph,
    scenario: Scenario,
    selection: DecoySelection,
    force: bool = False,
) -> MetricsReport:
    """Compose the five measurements for one (profile, selection) pair."""
    decoys = selection.decoys
    return MetricsReport(
        interception_ratio=interception_ratio(profile, decoys, force=force),
        decoy_count=len(decoys),
        unmitigated_ratio=unmitigated_ratio(full_graph, decoys),
        prevented_outcomes=prevented_outcomes(full_graph, scenario, decoys),
        and_intercepted_per_decoy=and_interception(profile, scenario, decoys),
    )


# -- flat report rows -------------------------------------------------------


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_row(
    report: MetricsReport,
    selection: DecoySelection,
    n_targets: int,
    seed: int | None = None,
    scheme: str | None = None,
) -> dict[str, str]:
    """One CSV row in the stable column order.

    ``seed`` defaults to the selection's own sampling seed when present;
    experiment runs pass the instance seed instead so rows stay
    reproducible from the master seed.
    """
    params = selection.params
    if seed is None:
        seed = params.get("seed")
    values = {
        "scheme": scheme or selection.scheme,
        "beta": params.get("beta"),
        "gamma": params.get("gamma"),
        "rho": params.get("rho"),
        "seed": seed,
        "n_targets": n_targets,
        "interception_ratio": report.interception_ratio,
        "decoy_count": report.decoy_count,
        "unmitigated_ratio": report.unmitigated_ratio,
        "prevented_outcomes": report.prevented_outcomes,
        "and_per_decoy": report.and_intercepted_per_decoy,
        "solve_seconds": selection.solve_seconds,
    }
    return {column: format_cell(values[column]) for column in REPORT_COLUMNS}


def rows_to_csv(rows: Sequence[Mapping[str, str]]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in REPORT_COLUMNS})
    return buffer.getvalue()
