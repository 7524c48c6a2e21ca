"""Shared builders and independent oracles for the test suite.

The oracle implementations here deliberately avoid the package's own
traversal code paths: reachability is recomputed by naive full sweeps,
path enumeration by a recursive enumerator (cross-checked against
networkx), so agreement between package and oracle is meaningful.
"""

from __future__ import annotations

import random

import pytest

from decoyplan import (
    AttackGraph,
    GateType,
    GeneratorConfig,
    Node,
    NodeKind,
    build_threat_profile,
    generate_graph,
    sample_scenario,
)
from decoyplan.fixtures import fig2_graph, fig2_scenario


# -- graph builders ----------------------------------------------------------


def node(node_id, kind="technique", gate="or", mitigated=False, name=None):
    return Node(
        id=node_id,
        name=name or node_id,
        kind=NodeKind(kind),
        gate=GateType(gate),
        mitigated=mitigated,
    )


def graph_of(spec: str, **overrides) -> AttackGraph:
    """Compact builder: ``"s>a a>t"`` with per-node overrides.

    Nodes default to or-gated techniques; ids starting with ``s``, ``o``
    or ``t`` default to outcomes (sources and targets in most tests).
    Overrides map node id to a dict of ``node()`` keyword arguments.
    """
    edges = []
    ids: list[str] = []
    for part in spec.split():
        src, dst = part.split(">")
        edges.append((src, dst))
        for nid in (src, dst):
            if nid not in ids:
                ids.append(nid)
    nodes = []
    for nid in sorted(ids):
        kwargs = {"kind": "outcome" if nid[0] in "sot" else "technique"}
        kwargs.update(overrides.get(nid, {}))
        nodes.append(node(nid, **kwargs))
    return AttackGraph(nodes, edges)


def chain_graph() -> AttackGraph:
    """s -> a -> t with an outcome source and target around one technique."""
    return graph_of("s>a a>t")


@pytest.fixture(scope="session")
def fig2():
    return fig2_graph()


@pytest.fixture(scope="session")
def fig2_scn():
    return fig2_scenario()


@pytest.fixture(scope="session")
def fig2_profile(fig2, fig2_scn):
    return build_threat_profile(fig2, fig2_scn)


# -- randomized instances ------------------------------------------------------


def small_instance(seed: int, *, n_techniques=12, n_outcomes=6, layers=4,
                   and_fraction=0.25, mitigated_fraction=0.4, mean_out_degree=1.8,
                   max_targets=3):
    """A small (graph, scenario, profile) triple, deterministic per seed."""
    config = GeneratorConfig(
        n_techniques=n_techniques,
        n_outcomes=n_outcomes,
        and_fraction=and_fraction,
        mitigated_fraction=mitigated_fraction,
        mean_out_degree=mean_out_degree,
        layers=layers,
        seed=seed,
    )
    graph = generate_graph(config)
    rng = random.Random(seed)
    n_targets = rng.randint(1, max_targets)
    scenario = sample_scenario(graph, n_targets, seed)
    profile = build_threat_profile(graph, scenario)
    return graph, scenario, profile


# -- independent oracles -------------------------------------------------------


def naive_logical_reachable(graph: AttackGraph, source: str, blocked=frozenset()):
    """Fixed point by repeated full sweeps over all nodes (at most |V| of them)."""
    blocked = frozenset(blocked)
    reached = {source}
    for _ in range(len(graph.nodes) + 1):
        added = False
        for nid, n in graph.nodes.items():
            if nid in reached or nid in blocked:
                continue
            preds = graph.predecessors(nid)
            if n.gate is GateType.OR:
                ok = any(p in reached for p in preds)
            else:
                ok = bool(preds) and all(p in reached for p in preds)
            if ok:
                reached.add(nid)
                added = True
        if not added:
            break
    return frozenset(reached)


def naive_is_separated(graph, scenario, blocked):
    for s in scenario.sorted_sources():
        if naive_logical_reachable(graph, s, blocked) & scenario.targets:
            return False
    return True


def recursive_simple_paths(graph: AttackGraph, source: str, target: str):
    """Plain recursive all-simple-paths enumerator (lexicographic order)."""
    results = []

    def walk(current, path, on_path):
        if current == target:
            results.append(tuple(path))
            return
        for nxt in sorted(graph.successors(current)):
            if nxt in on_path:
                continue
            path.append(nxt)
            on_path.add(nxt)
            walk(nxt, path, on_path)
            path.pop()
            on_path.discard(nxt)

    walk(source, [source], {source})
    return results


def eq1_attack_paths(graph, source, target):
    """Direct-closure attack paths recomputed from scratch.

    Enumerates every simple path recursively, then applies the
    and-closure rule: each and-gated spine node (the source exempt)
    contributes all of its predecessors, which must be plain-reachable
    from the source or the spine is dropped.
    """
    reach = set()
    stack = [source]
    while stack:
        u = stack.pop()
        if u in reach:
            continue
        reach.add(u)
        stack.extend(graph.successors(u))
    out = []
    for spine in recursive_simple_paths(graph, source, target):
        closure = set()
        feasible = True
        for v in spine[1:]:
            if graph.nodes[v].gate is GateType.AND:
                preds = graph.predecessors(v)
                if not preds <= reach:
                    feasible = False
                    break
                closure |= preds
        if feasible:
            out.append((spine, frozenset(closure - set(spine))))
    return out


def oracle_interception(profile, decoys):
    """Exhaustive path scan, recomputed from the raw path list."""
    decoys = frozenset(decoys)
    if not profile.paths:
        return 1.0
    return sum(
        1 for p in profile.paths if set(p.spine) & decoys or p.closure & decoys
    ) / len(profile.paths)


def oracle_prevented(graph, scenario, decoys):
    """Per-outcome double reachability, each recomputed from scratch."""
    count = 0
    for outcome in graph.outcome_ids():
        if outcome in scenario.targets:
            continue
        before = any(
            outcome in naive_logical_reachable(graph, s) for s in scenario.sorted_sources()
        )
        after = any(
            outcome in naive_logical_reachable(graph, s, decoys)
            for s in scenario.sorted_sources()
        )
        if before and not after:
            count += 1
    return count


def oracle_and_interception(profile, scenario, decoys):
    if not decoys:
        return None
    graph = profile.graph
    sources = [s for s in scenario.sorted_sources() if s in graph]
    blocked = frozenset(d for d in decoys if d in graph)
    hits = 0
    for nid, n in graph.nodes.items():
        if n.gate.value != "and":
            continue
        before = any(nid in naive_logical_reachable(graph, s) for s in sources)
        after = any(nid in naive_logical_reachable(graph, s, blocked) for s in sources)
        if before and not after:
            hits += 1
    return hits / len(decoys)
