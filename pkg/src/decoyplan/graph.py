"""AND/OR attack-graph model: validation, file format, and reachability.

The graph is directed and has two node kinds. *Technique* nodes are
adversary actions; they are the only nodes a decoy can expose and the only
nodes that may carry a mitigation flag. *Outcome* nodes are the effects of
those actions on the environment. Edges encode execution preconditions:
technique->technique, technique->outcome and outcome->technique are legal,
outcome->outcome is not. Every node carries a gate: an ``and`` node is
usable only once all of its predecessors are, an ``or`` node as soon as at
least one predecessor is.

Two reachability notions are exposed. Plain reachability follows edges and
ignores gates. Logical reachability is the least fixed point that honors
gates and an optional blocked set: the source counts as reachable by
definition (it models a capability the attacker already has), blocked
nodes never become reachable, and an ``and`` node with no predecessors is
unreachable unless it is the source itself.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import networkx as nx

from .errors import (
    BlockedSetError,
    GraphFormatError,
    UnknownNodeError,
    ValidationError,
)

logger = logging.getLogger(__name__)

GRAPH_FORMAT_VERSION = 1

_TOP_FIELDS = {"version", "nodes", "edges"}
_NODE_FIELDS = {"id", "name", "kind", "gate", "mitigated"}
_SCENARIO_FIELDS = {"sources", "targets"}


class NodeKind(Enum):
    TECHNIQUE = "technique"
    OUTCOME = "outcome"


class GateType(Enum):
    AND = "and"
    OR = "or"


@dataclass(frozen=True)
class Node:
    """One attack step (technique) or one of its effects (outcome)."""

    id: str
    name: str
    kind: NodeKind
    gate: GateType
    mitigated: bool = False


class AttackGraph:
    """Immutable directed AND/OR graph of techniques and outcomes.

    All structural invariants are checked at construction time; instances
    never mutate afterwards, so they are safe to share between threads and
    every operation below is a pure read.
    """

    def __init__(self, nodes: Iterable[Node], edges: Iterable[tuple[str, str]]):
        node_map: dict[str, Node] = {}
        for node in nodes:
            if not node.id:
                raise ValidationError("node with empty id")
            if node.id in node_map:
                raise ValidationError(f"duplicate node id {node.id!r}")
            if node.kind is NodeKind.OUTCOME and node.mitigated:
                raise ValidationError(f"outcome node {node.id!r} cannot be mitigated")
            node_map[node.id] = node

        edge_set: set[tuple[str, str]] = set()
        for src, dst in edges:
            if src == dst:
                raise ValidationError(f"self-loop on node {src!r}")
            for endpoint in (src, dst):
                if endpoint not in node_map:
                    raise ValidationError(
                        f"edge ({src!r}, {dst!r}) references unknown node {endpoint!r}"
                    )
            if (
                node_map[src].kind is NodeKind.OUTCOME
                and node_map[dst].kind is NodeKind.OUTCOME
            ):
                raise ValidationError(f"edge ({src!r}, {dst!r}) connects two outcomes")
            edge_set.add((src, dst))

        digraph = nx.DiGraph()
        digraph.add_nodes_from(sorted(node_map))
        digraph.add_edges_from(sorted(edge_set))
        self._nodes = node_map
        self._edges = frozenset(edge_set)
        self._g = digraph
        # Sorted adjacency tuples: deterministic iteration without relying
        # on insertion order, and cheap access for the traversal-heavy code.
        succ: dict[str, list[str]] = {i: [] for i in node_map}
        pred: dict[str, list[str]] = {i: [] for i in node_map}
        for u, v in sorted(edge_set):
            succ[u].append(v)
            pred[v].append(u)
        self._succ = {i: tuple(vs) for i, vs in succ.items()}
        self._pred = {i: tuple(us) for i, us in pred.items()}

    @property
    def nodes(self) -> Mapping[str, Node]:
        return MappingProxyType(self._nodes)

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return self._edges

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def __eq__(self, other: object):
        if not isinstance(other, AttackGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._edges == other._edges

    def __repr__(self) -> str:
        return f"AttackGraph({len(self._nodes)} nodes, {len(self._edges)} edges)"

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def technique_ids(self) -> tuple[str, ...]:
        return tuple(
            i for i in sorted(self._nodes) if self._nodes[i].kind is NodeKind.TECHNIQUE
        )

    def outcome_ids(self) -> tuple[str, ...]:
        return tuple(
            i for i in sorted(self._nodes) if self._nodes[i].kind is NodeKind.OUTCOME
        )

    def predecessors(self, node_id: str) -> frozenset[str]:
        """Direct predecessors of a node (its execution preconditions)."""
        self.node(node_id)
        return frozenset(self._pred[node_id])

    def sorted_predecessors(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._pred[node_id]

    def successors(self, node_id: str) -> frozenset[str]:
        self.node(node_id)
        return frozenset(self._succ[node_id])

    def sorted_successors(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._succ[node_id]

    def in_degree(self, node_id: str) -> int:
        self.node(node_id)
        return len(self._pred[node_id])

    def subgraph(self, node_ids: Iterable[str]) -> "AttackGraph":
        """Induced subgraph: the given nodes plus every edge between them."""
        wanted = set(node_ids)
        for node_id in wanted:
            self.node(node_id)
        nodes = [self._nodes[i] for i in sorted(wanted)]
        edges = [(u, v) for (u, v) in self._edges if u in wanted and v in wanted]
        return AttackGraph(nodes, edges)

    # -- reachability ---------------------------------------------------

    def plain_reachable(self, origin: str) -> frozenset[str]:
        """All nodes reachable from ``origin`` by edge traversal, gates ignored."""
        self.node(origin)
        return frozenset({origin} | nx.descendants(self._g, origin))

    def check_blocked(self, blocked: Iterable[str], source: str | None = None) -> frozenset[str]:
        """Validate a blocked set: technique nodes only, never the source."""
        checked = frozenset(blocked)
        for node_id in checked:
            if self.node(node_id).kind is not NodeKind.TECHNIQUE:
                raise BlockedSetError(f"blocked set contains outcome {node_id!r}")
        if source is not None and source in checked:
            raise BlockedSetError(f"blocked set contains the source {source!r}")
        return checked

    def logical_reachable(
        self, source: str, blocked: Iterable[str] = frozenset()
    ) -> frozenset[str]:
        """Least fixed point of gate-aware reachability from ``source``.

        The source is reachable by definition. An unblocked ``or`` node is
        reachable once at least one predecessor is; an unblocked ``and``
        node once all of its predecessors are (and it has at least one).
        Monotone worklist iteration makes this well defined on cycles.
        """
        self.node(source)
        blocked = self.check_blocked(blocked, source)

        reached = {source}
        satisfied: dict[str, int] = {}
        queue = deque([source])
        while queue:
            current = queue.popleft()
            for succ in self._succ[current]:
                if succ in reached or succ in blocked:
                    continue
                satisfied[succ] = satisfied.get(succ, 0) + 1
                gate = self._nodes[succ].gate
                if gate is GateType.OR or satisfied[succ] == len(self._pred[succ]):
                    reached.add(succ)
                    queue.append(succ)
        return frozenset(reached)

    def logical_order(
        self, source: str, blocked: Iterable[str] = frozenset()
    ) -> dict[str, int]:
        """Activation round of every logically reachable node.

        Same fixed point as :meth:`logical_reachable` (a node is present
        iff reachable), computed in synchronized rounds. Every reachable
        non-source node has a predecessor that activated strictly
        earlier (for ``and`` nodes: all of them), which makes the order a
        well-founded scaffold for extracting grounded derivations.
        """
        self.node(source)
        blocked = self.check_blocked(blocked, source)
        order = {source: 0}
        satisfied: dict[str, int] = {}
        frontier = [source]
        rounds = 0
        while frontier:
            rounds += 1
            activated: list[str] = []
            for current in frontier:
                for succ in self._succ[current]:
                    if succ in order or succ in blocked:
                        continue
                    satisfied[succ] = satisfied.get(succ, 0) + 1
                    gate = self._nodes[succ].gate
                    if gate is GateType.OR or satisfied[succ] == len(self._pred[succ]):
                        order[succ] = rounds
                        activated.append(succ)
            frontier = activated
        return order


@dataclass(frozen=True)
class Scenario:
    """An attacker foothold (sources) and the outcomes the defender protects."""

    sources: frozenset[str]
    targets: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "sources", frozenset(self.sources))
        object.__setattr__(self, "targets", frozenset(self.targets))
        if not self.sources:
            raise ValidationError("scenario has no sources")
        if not self.targets:
            raise ValidationError("scenario has no targets")
        overlap = self.sources & self.targets
        if overlap:
            raise ValidationError(
                f"scenario sources and targets overlap: {sorted(overlap)}"
            )

    def sorted_sources(self) -> tuple[str, ...]:
        return tuple(sorted(self.sources))

    def sorted_targets(self) -> tuple[str, ...]:
        return tuple(sorted(self.targets))


def validate_scenario(graph: AttackGraph, scenario: Scenario) -> None:
    """Check a scenario against a graph: ids exist and targets are outcomes."""
    for node_id in sorted(scenario.sources | scenario.targets):
        graph.node(node_id)
    for target in scenario.sorted_targets():
        if graph.node(target).kind is not NodeKind.OUTCOME:
            raise ValidationError(f"target {target!r} is not an outcome node")


def is_separated(
    graph: AttackGraph, scenario: Scenario, blocked: Iterable[str]
) -> bool:
    """True iff no target is logically reachable from any source given ``blocked``."""
    validate_scenario(graph, scenario)
    blocked = frozenset(blocked)
    for source in scenario.sorted_sources():
        reached = graph.logical_reachable(source, blocked)
        if reached & scenario.targets:
            return False
    return True


# -- file format ---------------------------------------------------------


def _load_json(document: str | bytes) -> object:
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GraphFormatError(f"document is not valid UTF-8: {exc}") from exc
    try:
        return json.loads(document)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(exc.msg, exc.lineno, exc.colno) from exc


def _check_fields(obj: dict, allowed: set[str], context: str, strict: bool) -> None:
    unknown = sorted(set(obj) - allowed)
    if not unknown:
        return
    if strict:
        raise GraphFormatError(f"unknown field(s) {unknown} in {context}")
    logger.warning("ignoring unknown field(s) %s in %s", unknown, context)


def parse_graph(document: str | bytes, strict: bool = True) -> AttackGraph:
    """Parse and validate a graph document (see the README for the format)."""
    data = _load_json(document)
    if not isinstance(data, dict):
        raise GraphFormatError("graph document must be an object")
    _check_fields(data, _TOP_FIELDS, "graph document", strict)
    version = data.get("version")
    if version != GRAPH_FORMAT_VERSION:
        raise GraphFormatError(f"unsupported graph format version {version!r}")
    raw_nodes = data.get("nodes")
    raw_edges = data.get("edges")
    if not isinstance(raw_nodes, list) or not isinstance(raw_edges, list):
        raise GraphFormatError("graph document needs 'nodes' and 'edges' arrays")

    nodes = []
    for entry in raw_nodes:
        if not isinstance(entry, dict):
            raise GraphFormatError(f"node entry {entry!r} is not an object")
        _check_fields(entry, _NODE_FIELDS, f"node {entry.get('id')!r}", strict)
        node_id = entry.get("id")
        name = entry.get("name")
        if not isinstance(node_id, str) or not isinstance(name, str):
            raise GraphFormatError(f"node {entry!r} needs string 'id' and 'name'")
        try:
            kind = NodeKind(entry.get("kind"))
            gate = GateType(entry.get("gate"))
        except ValueError as exc:
            raise GraphFormatError(f"node {node_id!r}: {exc}") from exc
        mitigated = entry.get("mitigated", False)
        if not isinstance(mitigated, bool):
            raise GraphFormatError(f"node {node_id!r}: 'mitigated' must be a boolean")
        nodes.append(Node(node_id, name, kind, gate, mitigated))

    edges = []
    for entry in raw_edges:
        if (
            not isinstance(entry, list)
            or len(entry) != 2
            or not all(isinstance(e, str) for e in entry)
        ):
            raise GraphFormatError(f"edge entry {entry!r} is not a [src, dst] pair")
        edges.append((entry[0], entry[1]))

    return AttackGraph(nodes, edges)


def _node_to_dict(node: Node) -> dict:
    out = {"id": node.id, "name": node.name, "kind": node.kind.value, "gate": node.gate.value}
    if node.mitigated:
        out["mitigated"] = True
    return out


def graph_to_dict(graph: AttackGraph) -> dict:
    return {
        "version": GRAPH_FORMAT_VERSION,
        "nodes": [_node_to_dict(graph.nodes[i]) for i in sorted(graph.nodes)],
        "edges": [list(edge) for edge in sorted(graph.edges)],
    }


def serialize_graph(graph: AttackGraph) -> str:
    """Deterministic serialization: nodes and edges in lexicographic order."""
    return json.dumps(graph_to_dict(graph), indent=2) + "\n"


def load_graph(path: str | Path, strict: bool = True) -> AttackGraph:
    return parse_graph(Path(path).read_bytes(), strict=strict)


def save_graph(graph: AttackGraph, path: str | Path) -> None:
    Path(path).write_text(serialize_graph(graph), encoding="utf-8")


def parse_scenario(document: str | bytes, strict: bool = True) -> Scenario:
    data = _load_json(document)
    if not isinstance(data, dict):
        raise GraphFormatError("scenario document must be an object")
    _check_fields(data, _SCENARIO_FIELDS, "scenario document", strict)
    sources = data.get("sources")
    targets = data.get("targets")
    for label, value in (("sources", sources), ("targets", targets)):
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise GraphFormatError(f"scenario {label!r} must be an array of ids")
    return Scenario(frozenset(sources), frozenset(targets))


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "sources": list(scenario.sorted_sources()),
        "targets": list(scenario.sorted_targets()),
    }


def serialize_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"


def load_scenario(path: str | Path, strict: bool = True) -> Scenario:
    return parse_scenario(Path(path).read_bytes(), strict=strict)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(serialize_scenario(scenario), encoding="utf-8")
