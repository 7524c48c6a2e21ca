"""Attack-path enumeration and threat-profile construction.

An attack path is a simple directed path (the *spine*) from a source to a
target, augmented with the preconditions its and-gated nodes drag in (the
*closure*). Three closure modes are supported:

* ``support`` (default) - the full precondition bundle: every and-gated
  node pulls in all of its predecessors, and every pulled-in node pulls in
  one grounded chain of preconditions back to the source, recursively. A
  path then carries everything an attacker must execute to walk it, so a
  decoy set that disconnects the targets necessarily touches every path.
* ``direct`` - only the immediate predecessors of and-gated spine nodes,
  which must all be reachable from the source (plain edge reachability by
  default, gate-aware with ``logical=True``).
* ``recursive`` - ``direct``, then transitively expanded over and-gated
  closure members.

A spine whose and-gated preconditions cannot be satisfied from the source
is not a usable attack path and is dropped.

The threat profile is the induced subgraph over the union of all attack
paths between every (source, target) pair, together with the path list
itself. Enumeration is capped per pair; a capped profile carries a
``truncated`` flag that downstream metrics honor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    GraphFormatError,
    InfeasibleAndNodeError,
    UnknownNodeError,
    ValidationError,
)
from .graph import (
    AttackGraph,
    GateType,
    Scenario,
    _check_fields,
    _load_json,
    graph_to_dict,
    parse_graph,
    scenario_to_dict,
    validate_scenario,
)

DEFAULT_PATH_CAP = 100_000

CLOSURE_MODES = ("support", "direct", "recursive")

_PROFILE_FIELDS = {"version", "nodes", "edges", "scenario", "truncated", "paths"}
_PATH_FIELDS = {"source", "target", "spine", "closure"}


@dataclass(frozen=True)
class AttackPath:
    """A spine plus the and-closure it drags in; ``node_set`` is their union."""

    source: str
    target: str
    spine: tuple[str, ...]
    closure: frozenset[str]

    @property
    def node_set(self) -> frozenset[str]:
        return frozenset(self.spine) | self.closure


@dataclass(frozen=True)
class ThreatProfile:
    """Induced subgraph of all attack paths between a scenario's sources and targets."""

    graph: AttackGraph
    scenario: Scenario
    paths: tuple[AttackPath, ...]
    truncated: bool = False

    def present_sources(self) -> tuple[str, ...]:
        return tuple(s for s in self.scenario.sorted_sources() if s in self.graph)

    def present_targets(self) -> tuple[str, ...]:
        return tuple(t for t in self.scenario.sorted_targets() if t in self.graph)

    def candidate_techniques(self) -> tuple[str, ...]:
        """Technique nodes of the profile that may be chosen as decoys."""
        excluded = self.scenario.sources | self.scenario.targets
        return tuple(t for t in self.graph.technique_ids() if t not in excluded)


def simple_paths(
    graph: AttackGraph,
    source: str,
    target: str,
    cap: int | None = DEFAULT_PATH_CAP,
) -> tuple[list[tuple[str, ...]], bool]:
    """All simple directed paths from ``source`` to ``target``.

    Depth-first enumeration visiting successors in lexicographic id order,
    so the result order is deterministic. Returns ``(spines, truncated)``:
    when more than ``cap`` paths exist, exactly ``cap`` are returned and
    the flag is set. ``cap=None`` disables the limit.
    """
    graph.node(source)
    graph.node(target)
    if source == target:
        raise ValidationError("source and target must differ")
    if cap is not None and cap < 1:
        raise ValueError("cap must be a positive integer")

    def successors_of(node_id: str) -> tuple[str, ...]:
        return graph.sorted_successors(node_id)

    results: list[tuple[str, ...]] = []
    truncated = False
    path = [source]
    on_path = {source}
    stack = [iter(successors_of(source))]
    while stack:
        child = next(stack[-1], None)
        if child is None:
            stack.pop()
            on_path.discard(path.pop())
            continue
        if child in on_path:
            continue
        if child == target:
            if cap is not None and len(results) == cap:
                truncated = True
                break
            results.append(tuple(path) + (target,))
            continue
        path.append(child)
        on_path.add(child)
        stack.append(iter(successors_of(child)))
    return results, truncated


def _direct_closure(
    graph: AttackGraph,
    spine: tuple[str, ...],
    reach: frozenset[str],
    recursive: bool,
) -> frozenset[str]:
    """And-closure of a spine given the source's reachable set.

    Raises :class:`InfeasibleAndNodeError` when an and-gated node that the
    closure must satisfy has a predecessor outside ``reach``. The spine's
    first node is exempt: it is the attacker's starting capability, so its
    own preconditions are taken as already met.
    """
    source = spine[0]
    spine_set = set(spine)
    closure: set[str] = set()
    pending = [v for v in spine if v != source and graph.nodes[v].gate is GateType.AND]
    expanded: set[str] = set()
    while pending:
        node_id = pending.pop()
        if node_id in expanded:
            continue
        expanded.add(node_id)
        for pred in graph.sorted_predecessors(node_id):
            if pred not in reach:
                raise InfeasibleAndNodeError(node_id, pred)
            if pred in spine_set or pred in closure:
                continue
            closure.add(pred)
            if recursive and graph.nodes[pred].gate is GateType.AND:
                pending.append(pred)
    return frozenset(closure)


def _support_closure(
    graph: AttackGraph, spine: tuple[str, ...], order: Mapping[str, int]
) -> frozenset[str]:
    """Full precondition bundle of a spine.

    ``order`` is the source's logical activation order with nothing
    blocked. Every and-gated spine node pulls in all of its predecessors;
    every pulled-in node is grounded by one derivation chain chosen along
    strictly earlier activation rounds (or-gated nodes keep their
    earliest-activated predecessor, and-gated nodes keep all of them), so
    the bundle always ends at the source and construction terminates even
    on cycles. The result is closed under and-gate preconditions and
    internally reachable, which is what makes "no decoy on the path"
    equivalent to "the path still works".
    """
    source = spine[0]
    members = set(spine)
    grounded = set(spine)
    stack: list[str] = []

    def demand_predecessors(node_id: str) -> None:
        for pred in graph.sorted_predecessors(node_id):
            if pred not in order:
                raise InfeasibleAndNodeError(node_id, pred)
            if pred not in grounded:
                stack.append(pred)

    for v in spine:
        if v != source and graph.nodes[v].gate is GateType.AND:
            demand_predecessors(v)
    while stack:
        node_id = stack.pop()
        if node_id in grounded:
            continue
        grounded.add(node_id)
        members.add(node_id)
        if graph.nodes[node_id].gate is GateType.AND:
            demand_predecessors(node_id)
        else:
            rank = order[node_id]
            best = min(
                (p for p in graph.sorted_predecessors(node_id) if p in order and order[p] < rank),
                key=lambda p: (order[p], p),
            )
            if best not in grounded:
                stack.append(best)
    return frozenset(members - set(spine))


def and_closure(
    graph: AttackGraph,
    spine: Iterable[str],
    source: str | None = None,
    *,
    logical: bool = False,
    recursive: bool = False,
) -> frozenset[str]:
    """Off-spine predecessors demanded by the spine's and-gated nodes.

    ``logical`` switches the reachability test used for the closure
    condition from plain edge-following (the default) to gate-aware
    reachability. ``recursive`` additionally expands and-gated closure
    members with their own predecessors.
    """
    spine = tuple(spine)
    _check_spine(graph, spine, source)
    source = spine[0]
    reach = graph.logical_reachable(source) if logical else graph.plain_reachable(source)
    return _direct_closure(graph, spine, reach, recursive)


def support_closure(
    graph: AttackGraph, spine: Iterable[str], source: str | None = None
) -> frozenset[str]:
    """Full precondition bundle of a spine (see module docstring)."""
    spine = tuple(spine)
    _check_spine(graph, spine, source)
    return _support_closure(graph, spine, graph.logical_order(spine[0]))


def _check_spine(graph: AttackGraph, spine: tuple[str, ...], source: str | None) -> None:
    if not spine:
        raise ValidationError("empty spine")
    if source is not None and source != spine[0]:
        raise ValidationError("spine does not start at the given source")
    if len(set(spine)) != len(spine):
        raise ValidationError("spine repeats a node")
    for node_id in spine:
        graph.node(node_id)
    for u, v in zip(spine, spine[1:]):
        if (u, v) not in graph.edges:
            raise ValidationError(f"spine uses missing edge ({u!r}, {v!r})")


def _attack_paths(
    graph: AttackGraph,
    source: str,
    target: str,
    cap: int | None,
    closure_mode: str,
    logical: bool,
) -> tuple[list[AttackPath], bool]:
    if closure_mode not in CLOSURE_MODES:
        raise ValidationError(f"unknown closure mode {closure_mode!r}")
    spines, truncated = simple_paths(graph, source, target, cap)
    if closure_mode == "support":
        order = graph.logical_order(source)
        reach = None
    else:
        reach = graph.logical_reachable(source) if logical else graph.plain_reachable(source)
        order = None
    paths = []
    for spine in spines:
        try:
            if closure_mode == "support":
                closure = _support_closure(graph, spine, order)
            else:
                closure = _direct_closure(graph, spine, reach, closure_mode == "recursive")
        except InfeasibleAndNodeError:
            continue
        paths.append(AttackPath(source, target, spine, closure))
    return paths, truncated


def attack_paths(
    graph: AttackGraph,
    source: str,
    target: str,
    cap: int | None = DEFAULT_PATH_CAP,
    *,
    closure_mode: str = "support",
    logical: bool = False,
) -> list[AttackPath]:
    """Valid attack paths from ``source`` to ``target`` in deterministic order.

    Spines whose closure is infeasible are silently dropped here; the
    lower-level closure operations report them individually. ``logical``
    only affects the ``direct`` and ``recursive`` modes.
    """
    paths, _ = _attack_paths(graph, source, target, cap, closure_mode, logical)
    return paths


def build_threat_profile(
    graph: AttackGraph,
    scenario: Scenario,
    cap: int | None = DEFAULT_PATH_CAP,
    *,
    closure_mode: str = "support",
    logical: bool = False,
) -> ThreatProfile:
    """Enumerate attack paths for every (source, target) pair and induce the profile.

    A profile with zero paths is a legal result (empty graph, empty path
    list); downstream consumers decide how to treat it.
    """
    validate_scenario(graph, scenario)
    all_paths: list[AttackPath] = []
    truncated = False
    for source in scenario.sorted_sources():
        for target in scenario.sorted_targets():
            paths, hit_cap = _attack_paths(graph, source, target, cap, closure_mode, logical)
            all_paths.extend(paths)
            truncated = truncated or hit_cap
    members: set[str] = set()
    for path in all_paths:
        members |= path.node_set
    return ThreatProfile(
        graph=graph.subgraph(members),
        scenario=scenario,
        paths=tuple(all_paths),
        truncated=truncated,
    )


# -- profile file format ---------------------------------------------------


def profile_to_dict(profile: ThreatProfile) -> dict:
    data = graph_to_dict(profile.graph)
    data["scenario"] = scenario_to_dict(profile.scenario)
    data["truncated"] = profile.truncated
    data["paths"] = [
        {
            "source": p.source,
            "target": p.target,
            "spine": list(p.spine),
            "closure": sorted(p.closure),
        }
        for p in profile.paths
    ]
    return data


def serialize_profile(profile: ThreatProfile) -> str:
    return json.dumps(profile_to_dict(profile), indent=2) + "\n"


def parse_profile(document: str | bytes, strict: bool = True) -> ThreatProfile:
    data = _load_json(document)
    if not isinstance(data, dict):
        raise GraphFormatError("profile document must be an object")
    _check_fields(data, _PROFILE_FIELDS, "profile document", strict)
    graph_part = {k: data.get(k) for k in ("version", "nodes", "edges")}
    graph = parse_graph(json.dumps(graph_part), strict=strict)
    raw_scenario = data.get("scenario")
    if not isinstance(raw_scenario, dict):
        raise GraphFormatError("profile document needs a 'scenario' object")
    scenario = Scenario(
        frozenset(raw_scenario.get("sources", [])),
        frozenset(raw_scenario.get("targets", [])),
    )
    truncated = data.get("truncated", False)
    if not isinstance(truncated, bool):
        raise GraphFormatError("'truncated' must be a boolean")
    raw_paths = data.get("paths")
    if not isinstance(raw_paths, list):
        raise GraphFormatError("profile document needs a 'paths' array")

    paths = []
    for entry in raw_paths:
        if not isinstance(entry, dict):
            raise GraphFormatError(f"path entry {entry!r} is not an object")
        _check_fields(entry, _PATH_FIELDS, "path entry", strict)
        spine = entry.get("spine")
        closure = entry.get("closure", [])
        if not isinstance(spine, list) or not isinstance(closure, list):
            raise GraphFormatError(f"path entry {entry!r} needs 'spine' and 'closure' arrays")
        paths.append(
            AttackPath(
                source=entry.get("source"),
                target=entry.get("target"),
                spine=tuple(spine),
                closure=frozenset(closure),
            )
        )

    profile = ThreatProfile(graph=graph, scenario=scenario, paths=tuple(paths), truncated=truncated)
    _validate_profile(profile)
    return profile


def _validate_profile(profile: ThreatProfile) -> None:
    members: set[str] = set()
    for path in profile.paths:
        if not path.spine or path.spine[0] != path.source or path.spine[-1] != path.target:
            raise ValidationError(f"path {path.source!r}->{path.target!r} has an inconsistent spine")
        for node_id in path.node_set:
            if node_id not in profile.graph:
                raise UnknownNodeError(node_id)
        for u, v in zip(path.spine, path.spine[1:]):
            if (u, v) not in profile.graph.edges:
                raise ValidationError(f"path spine uses missing edge ({u!r}, {v!r})")
        members |= path.node_set
    if members != set(profile.graph.nodes):
        raise ValidationError("profile nodes do not equal the union of its path node sets")


def load_profile(path: str | Path, strict: bool = True) -> ThreatProfile:
    return parse_profile(Path(path).read_bytes(), strict=strict)


def save_profile(profile: ThreatProfile, path: str | Path) -> None:
    Path(path).write_text(serialize_profile(profile), encoding="utf-8")
