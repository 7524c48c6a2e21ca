"""Minimum-cost technique separator: exact solver, 0-1 model, oracle.

The problem: given a threat profile, pick the cheapest set X of technique
nodes so that blocking X makes every target logically unreachable from
every source. Mitigated techniques may be charged a higher cost (beta) to
bias the choice toward techniques that conventional countermeasures do not
already cover.

Three routes to the same semantics live here and cross-check one another:

* :func:`solve_optimal` - exact best-first branch and bound. Whenever the
  current choice fails to separate, it extracts a *witness*: the candidate
  techniques on one grounded derivation of a reachable target (the AND/OR
  analogue of a path). Any valid separator must block at least one witness
  member, which drives both branching and an admissible lower bound from
  packing node-disjoint witnesses. Every solution is post-checked with an
  independent reachability call before it is returned.
* :func:`build_model` - the full 0-1 integer linear model (per-source
  reachability variables with linearized gate logic, boundary constraints,
  partition totality), available for dumps and third-party cross-checks.
* :func:`brute_force_min_separator` - subset enumeration in increasing
  (cost, size, lexicographic) order, for small candidate counts.

Ties between equal-cost optima break by smaller cardinality, then by the
lexicographically smallest sorted id sequence, so results are fully
deterministic.
"""

from __future__ import annotations

import heapq
import itertools
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    BlockedSetError,
    EmptyProfileError,
    GraphFormatError,
    InfeasibleError,
    TooManyCandidatesError,
    ValidationError,
)
from .graph import (
    AttackGraph,
    GateType,
    Node,
    NodeKind,
    Scenario,
    _check_fields,
    _load_json,
    is_separated,
)
from .paths import ThreatProfile

_SELECTION_FIELDS = {"version", "scheme", "decoys", "cost", "optimal", "params", "meta"}

VarKey = tuple
"""Structured variable key: ("x", i), ("y", i), ("z", i), ("r", i, s), ("u", i, s), ("w", i, s)."""


def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**9)
    return Fraction(value)


@dataclass(frozen=True)
class CostModel:
    """Per-technique decoy cost: ``scale`` for unmitigated, ``scale*beta`` otherwise."""

    beta: Fraction = Fraction(1)
    scale: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "beta", _as_fraction(self.beta))
        object.__setattr__(self, "scale", _as_fraction(self.scale))
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def cost(self, node: Node) -> Fraction:
        if node.kind is not NodeKind.TECHNIQUE:
            raise ValueError(f"cost is defined only for techniques, not {node.id!r}")
        return self.scale * (self.beta if node.mitigated else Fraction(1))


@dataclass(frozen=True)
class Partition:
    """Witness assignment of every profile node to exactly one of X, Y, Z."""

    assignment: tuple[tuple[str, str], ...]

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "Partition":
        return cls(tuple(sorted(mapping.items())))

    def as_dict(self) -> dict[str, str]:
        return dict(self.assignment)

    def members(self, label: str) -> frozenset[str]:
        return frozenset(n for n, cls_ in self.assignment if cls_ == label)


@dataclass(frozen=True)
class LinearConstraint:
    name: str
    terms: tuple[tuple[VarKey, Fraction], ...]
    sense: str  # one of "<=", ">=", "="
    rhs: Fraction

    def evaluate(self, assignment: Mapping[VarKey, int]) -> Fraction:
        return sum((coeff * assignment[key] for key, coeff in self.terms), Fraction(0))

    def satisfied(self, assignment: Mapping[VarKey, int]) -> bool:
        value = self.evaluate(assignment)
        if self.sense == "<=":
            return value <= self.rhs
        if self.sense == ">=":
            return value >= self.rhs
        return value == self.rhs


@dataclass
class ZeroOneLinearModel:
    """A 0-1 linear program over structured variable keys."""

    variables: tuple[VarKey, ...]
    constraints: tuple[LinearConstraint, ...]
    objective: tuple[tuple[VarKey, Fraction], ...]

    def violations(self, assignment: Mapping[VarKey, int]) -> list[str]:
        missing = [key for key in self.variables if key not in assignment]
        if missing:
            raise ValidationError(f"assignment misses variables: {missing[:3]}...")
        return [c.name for c in self.constraints if not c.satisfied(assignment)]

    def is_feasible(self, assignment: Mapping[VarKey, int]) -> bool:
        return not self.violations(assignment)

    def objective_value(self, assignment: Mapping[VarKey, int]) -> Fraction:
        return sum((coeff * assignment[key] for key, coeff in self.objective), Fraction(0))

    def variable_name(self, key: VarKey) -> str:
        kind, rest = key[0], key[1:]
        return f"{kind}({','.join(rest)})"

    def to_lp(self) -> str:
        """Dump in LP interchange format with a legend mapping safe names."""
        index = {key: f"v{i}" for i, key in enumerate(self.variables)}

        def term_str(terms):
            parts = []
            for key, coeff in terms:
                num = float(coeff)
                sign = "-" if num < 0 else "+"
                parts.append(f"{sign} {abs(num):g} {index[key]}")
            if not parts:
                return "0 " + index[self.variables[0]]
            joined = " ".join(parts)
            return joined[2:] if joined.startswith("+ ") else joined

        lines = ["\\ zero-one technique separator model"]
        lines += [f"\\ {index[key]} = {self.variable_name(key)}" for key in self.variables]
        lines.append("Minimize")
        lines.append(" obj: " + term_str(self.objective))
        lines.append("Subject To")
        sense_map = {"<=": "<=", ">=": ">=", "=": "="}
        for c in self.constraints:
            lines.append(f" {c.name}: {term_str(c.terms)} {sense_map[c.sense]} {float(c.rhs):g}")
        lines.append("Binary")
        for key in self.variables:
            lines.append(f" {index[key]}")
        lines.append("End")
        return "\n".join(lines) + "\n"


def _profile_parts(profile: ThreatProfile):
    if not profile.paths:
        raise EmptyProfileError("threat profile has no attack paths")
    graph = profile.graph
    sources = profile.present_sources()
    targets = profile.present_targets()
    candidates = profile.candidate_techniques()
    return graph, sources, targets, candidates


def build_model(profile: ThreatProfile, costs: CostModel | None = None) -> ZeroOneLinearModel:
    """Assemble the 0-1 linear model for the separator over a profile.

    Per source s and node i there is a reachability variable r(i,s).
    Or-gates are linearized through an auxiliary u(i,s) = "some predecessor
    reachable"; and-gates through w(i,s) = "blocked or some predecessor
    unreachable" with r = 1 - w. The source's own r is fixed to 1, and an
    and-gated node without predecessors is fixed unreachable. Boundary
    constraints forbid an edge from a reachable Y node into a reachable Z
    node; fixings pin sources to Y, targets to Z, and outcomes out of X;
    totality assigns every node to exactly one class.
    """
    costs = costs or CostModel()
    graph, sources, targets, _ = _profile_parts(profile)
    node_ids = sorted(graph.nodes)
    target_set = set(targets)

    variables: list[VarKey] = []
    for i in node_ids:
        variables += [("x", i), ("y", i), ("z", i)]
    for s in sources:
        for i in node_ids:
            variables.append(("r", i, s))

    one = Fraction(1)
    constraints: list[LinearConstraint] = []
    aux: list[VarKey] = []

    def con(name, terms, sense, rhs):
        constraints.append(
            LinearConstraint(name, tuple(terms), sense, Fraction(rhs))
        )

    for s in sources:
        con(f"source_base[{s}]", [(("r", s, s), one)], "=", 1)
        for i in node_ids:
            if i == s:
                continue
            preds = sorted(graph.predecessors(i))
            r_i = ("r", i, s)
            if graph.nodes[i].gate is GateType.OR:
                u_i = ("u", i, s)
                aux.append(u_i)
                con(
                    f"or_any_ub[{i},{s}]",
                    [(u_i, one)] + [(("r", n, s), -one) for n in preds],
                    "<=",
                    0,
                )
                for n in preds:
                    con(f"or_any_lb[{i},{s},{n}]", [(u_i, one), (("r", n, s), -one)], ">=", 0)
                con(f"or_gate_cap[{i},{s}]", [(r_i, one), (("y", i), -one), (("z", i), -one)], "<=", 0)
                con(f"or_gate_aux[{i},{s}]", [(r_i, one), (u_i, -one)], "<=", 0)
                con(
                    f"or_gate_lb[{i},{s}]",
                    [(r_i, one), (("y", i), -one), (("z", i), -one), (u_i, -one)],
                    ">=",
                    -1,
                )
            elif preds:
                w_i = ("w", i, s)
                aux.append(w_i)
                con(f"and_block_lb[{i},{s}]", [(w_i, one), (("x", i), -one)], ">=", 0)
                for n in preds:
                    con(f"and_pred_lb[{i},{s},{n}]", [(w_i, one), (("r", n, s), one)], ">=", 1)
                con(
                    f"and_ub[{i},{s}]",
                    [(w_i, one), (("x", i), -one)] + [(("r", n, s), one) for n in preds],
                    "<=",
                    len(preds),
                )
                con(f"and_link[{i},{s}]", [(r_i, one), (w_i, one)], "=", 1)
            else:
                con(f"and_dead[{i},{s}]", [(r_i, one)], "=", 0)

    for s in sources:
        for (i, j) in sorted(graph.edges):
            con(
                f"boundary[{i},{j},{s}]",
                [(("y", i), one), (("z", j), one), (("r", i, s), one), (("r", j, s), one)],
                "<=",
                3,
            )

    for s in sources:
        con(f"fix_source[{s}]", [(("y", s), one)], "=", 1)
    for t in targets:
        con(f"fix_target[{t}]", [(("z", t), one)], "=", 1)
    for i in node_ids:
        if graph.nodes[i].kind is NodeKind.OUTCOME:
            con(f"fix_outcome[{i}]", [(("x", i), one)], "=", 0)
    for i in node_ids:
        con(
            f"total[{i}]",
            [(("x", i), one), (("y", i), one), (("z", i), one)],
            "=",
            1,
        )

    objective = tuple(
        (("x", t), costs.cost(graph.nodes[t])) for t in graph.technique_ids()
    )
    return ZeroOneLinearModel(
        variables=tuple(variables) + tuple(aux),
        constraints=tuple(constraints),
        objective=objective,
    )


def assignment_for_blocked(
    profile: ThreatProfile, blocked: Iterable[str]
) -> dict[VarKey, int]:
    """Canonical full variable assignment induced by a blocked set.

    X = blocked, Z = targets, Y = everything else; r values are the true
    gate-aware reachability per source; auxiliaries follow their
    definitions. Feasibility of this assignment in the model coincides
    with the blocked set separating the profile.
    """
    graph, sources, targets, _ = _profile_parts(profile)
    blocked = frozenset(blocked)
    target_set = set(targets)
    for b in blocked:
        if graph.node(b).kind is not NodeKind.TECHNIQUE:
            raise BlockedSetError(f"blocked set contains outcome {b!r}")
        if b in set(sources) | target_set:
            raise BlockedSetError(f"blocked set contains scenario node {b!r}")

    assign: dict[VarKey, int] = {}
    for i in graph.nodes:
        in_x = i in blocked
        in_z = i in target_set
        assign[("x", i)] = int(in_x)
        assign[("z", i)] = int(in_z and not in_x)
        assign[("y", i)] = int(not in_x and not in_z)
    for s in sources:
        reach = graph.logical_reachable(s, blocked)
        for i in graph.nodes:
            assign[("r", i, s)] = int(i in reach)
        for i in graph.nodes:
            if i == s:
                continue
            preds = graph.predecessors(i)
            if graph.nodes[i].gate is GateType.OR:
                assign[("u", i, s)] = int(any(p in reach for p in preds))
            elif preds:
                unmet = (i in blocked) or any(p not in reach for p in preds)
                assign[("w", i, s)] = int(unmet)
    return assign


# -- witness extraction and bounds ----------------------------------------


def _derivation_nodes(
    graph: AttackGraph, source: str, order: Mapping[str, int], target: str
) -> set[str]:
    """One grounded derivation of ``target``: a tree of reachable nodes.

    Or-gated nodes keep their earliest-activated predecessor, and-gated
    nodes keep all predecessors. Expansion always moves to strictly
    earlier activation rounds, so it terminates even on cyclic graphs.
    Any valid separator must block at least one node of the tree.
    """
    nodes = graph.nodes
    pred = graph._pred
    tree: set[str] = set()
    stack = [target]
    while stack:
        v = stack.pop()
        if v in tree:
            continue
        tree.add(v)
        if v == source:
            continue
        preds = pred[v]
        if nodes[v].gate is GateType.AND:
            stack.extend(preds)
        else:
            best = min(
                (p for p in preds if p in order and order[p] < order[v]),
                key=lambda p: (order[p], p),
            )
            stack.append(best)
    return tree


def _find_witness(
    graph: AttackGraph,
    sources: tuple[str, ...],
    targets: Iterable[str],
    blocked: frozenset[str],
    candidates: frozenset[str],
) -> frozenset[str] | None:
    """Candidate nodes of one surviving derivation, or None when separated."""
    target_list = sorted(targets)
    for s in sources:
        order = graph.logical_order(s, blocked)
        live = [t for t in target_list if t in order]
        if not live:
            continue
        t = min(live, key=lambda t: (order[t], t))
        tree = _derivation_nodes(graph, s, order, t)
        return frozenset(tree & candidates)
    return None


def _separation_bound(
    graph: AttackGraph,
    sources: tuple[str, ...],
    targets: Iterable[str],
    included: frozenset[str],
    excluded: frozenset[str],
    candidates: frozenset[str],
    costs: Mapping[str, Fraction],
    cutoff: Fraction | None = None,
):
    """Admissible lower bound by packing node-disjoint witnesses.

    Each packed witness must be hit by a distinct, not-yet-excluded
    candidate, so the minimum usable cost per witness adds up to a valid
    bound on the remaining cost. Returns ``(extra_cost, extra_count,
    feasible, first_witness)`` where ``first_witness`` is the branching
    certificate under ``included`` alone (None when already separated).
    """
    blocked = set(included)
    extra_cost = Fraction(0)
    extra_count = 0
    first: frozenset[str] | None = None
    first_seen = False
    while True:
        witness = _find_witness(graph, sources, targets, frozenset(blocked), candidates)
        if not first_seen:
            first = witness
            first_seen = True
        if witness is None:
            return extra_cost, extra_count, True, first
        usable = witness - excluded
        if not usable:
            return extra_cost, extra_count, False, first
        extra_cost += min(costs[c] for c in usable)
        extra_count += 1
        blocked |= witness
        if cutoff is not None and extra_cost > cutoff:
            return extra_cost, extra_count, True, first


@dataclass(frozen=True)
class SolverOptions:
    time_budget: float | None = 60.0
    max_nodes: int | None = None


@dataclass
class DecoySelection:
    """A chosen decoy set with its cost, provenance, and optional witness."""

    scheme: str
    decoys: frozenset[str]
    cost: Fraction
    params: dict = field(default_factory=dict)
    optimal: bool = False
    solve_seconds: float = 0.0
    proof: Partition | None = None

    def sorted_decoys(self) -> tuple[str, ...]:
        return tuple(sorted(self.decoys))


def _selection_key(costs_by_id, ids: frozenset[str]):
    return (
        sum((costs_by_id[c] for c in ids), Fraction(0)),
        len(ids),
        tuple(sorted(ids)),
    )


def _make_partition(graph: AttackGraph, targets, decoys: frozenset[str]) -> Partition:
    target_set = set(targets)
    mapping = {}
    for i in graph.nodes:
        if i in decoys:
            mapping[i] = "X"
        elif i in target_set:
            mapping[i] = "Z"
        else:
            mapping[i] = "Y"
    return Partition.from_mapping(mapping)


def solve_optimal(
    profile: ThreatProfile,
    costs: CostModel | None = None,
    options: SolverOptions | None = None,
) -> DecoySelection:
    """Exact minimum-cost separator via best-first branch and bound.

    Branches over the candidates of a surviving witness derivation,
    prunes with the witness-packing lower bound, and keeps searching
    through cost ties to honor the (cost, size, lexicographic) order. If
    the time budget runs out the best incumbent is returned with
    ``optimal=False``. The returned selection is verified by an
    independent reachability check before being handed back.
    """
    costs = costs or CostModel()
    options = options or SolverOptions()
    start = time.perf_counter()
    graph, sources, targets, candidates = _profile_parts(profile)
    cand_set = frozenset(candidates)
    cost_by_id = {c: costs.cost(graph.nodes[c]) for c in candidates}

    if _find_witness(graph, sources, targets, cand_set, cand_set) is not None:
        raise InfeasibleError(
            "no technique subset separates the sources from the targets"
        )

    def separated(blocked: frozenset[str]) -> bool:
        return _find_witness(graph, sources, targets, blocked, cand_set) is None

    # Greedy shrink from the full candidate set gives the first incumbent.
    greedy = set(candidates)
    for c in candidates:
        trial = frozenset(greedy - {c})
        if separated(trial):
            greedy.discard(c)
    incumbent = frozenset(greedy)
    inc_key = _selection_key(cost_by_id, incumbent)

    counter = itertools.count()
    heap: list = []

    def push(included: frozenset[str], excluded: frozenset[str]):
        base_cost = sum((cost_by_id[c] for c in included), Fraction(0))
        extra_cost, extra_count, feasible, witness = _separation_bound(
            graph, sources, targets, included, excluded, cand_set, cost_by_id,
            cutoff=inc_key[0] - base_cost,
        )
        if not feasible:
            return
        lb = (base_cost + extra_cost, len(included) + extra_count)
        if lb[0] > inc_key[0] or (lb[0] == inc_key[0] and lb[1] > inc_key[1]):
            return
        heapq.heappush(heap, (lb[0], lb[1], next(counter), included, excluded, witness))

    push(frozenset(), frozenset())
    proven = True
    explored = 0
    while heap:
        if options.time_budget is not None and time.perf_counter() - start > options.time_budget:
            proven = False
            break
        if options.max_nodes is not None and explored >= options.max_nodes:
            proven = False
            break
        lb_cost, lb_size, _, included, excluded, witness = heapq.heappop(heap)
        if lb_cost > inc_key[0] or (lb_cost == inc_key[0] and lb_size > inc_key[1]):
            continue
        explored += 1
        if witness is None:
            key = _selection_key(cost_by_id, included)
            if key < inc_key:
                inc_key, incumbent = key, included
            continue
        banned = set(excluded)
        for v in sorted(witness - excluded):
            push(included | {v}, frozenset(banned))
            banned.add(v)

    scenario = Scenario(frozenset(sources), frozenset(targets))
    if not is_separated(graph, scenario, incumbent):
        raise RuntimeError("internal error: solver produced a non-separating selection")

    return DecoySelection(
        scheme="optimal",
        decoys=incumbent,
        cost=inc_key[0],
        params={"beta": costs.beta},
        optimal=proven,
        solve_seconds=time.perf_counter() - start,
        proof=_make_partition(graph, targets, incumbent),
    )


def brute_force_min_separator(
    profile: ThreatProfile,
    costs: CostModel | None = None,
    candidate_limit: int = 20,
) -> DecoySelection:
    """Exhaustive oracle: first separating subset in (cost, size, lex) order.

    Uses only graph-core reachability, never the solver machinery, so it
    is an independent check of the same contract.
    """
    costs = costs or CostModel()
    start = time.perf_counter()
    graph, sources, targets, candidates = _profile_parts(profile)
    if len(candidates) > candidate_limit:
        raise TooManyCandidatesError(
            f"{len(candidates)} candidate techniques exceed the limit of {candidate_limit}"
        )
    cost_by_id = {c: costs.cost(graph.nodes[c]) for c in candidates}
    scenario = Scenario(frozenset(sources), frozenset(targets))

    if not is_separated(graph, scenario, frozenset(candidates)):
        raise InfeasibleError(
            "no technique subset separates the sources from the targets"
        )

    heap: list = [(Fraction(0), 0, (), -1)]
    while heap:
        cost_v, size, ids, max_idx = heapq.heappop(heap)
        if is_separated(graph, scenario, frozenset(ids)):
            return DecoySelection(
                scheme="brute-force",
                decoys=frozenset(ids),
                cost=cost_v,
                params={"beta": costs.beta},
                optimal=True,
                solve_seconds=time.perf_counter() - start,
                proof=_make_partition(graph, targets, frozenset(ids)),
            )
        for i in range(max_idx + 1, len(candidates)):
            c = candidates[i]
            heapq.heappush(heap, (cost_v + cost_by_id[c], size + 1, ids + (c,), i))
    raise InfeasibleError("exhausted all candidate subsets")  # unreachable after pre-check


# -- selection file format -------------------------------------------------


def selection_to_dict(selection: DecoySelection, created_at: str | None = None) -> dict:
    params = {
        k: (str(v) if isinstance(v, Fraction) else v) for k, v in selection.params.items()
    }
    data = {
        "version": 1,
        "scheme": selection.scheme,
        "decoys": list(selection.sorted_decoys()),
        "cost": str(selection.cost),
        "optimal": selection.optimal,
        "params": params,
    }
    meta: dict = {"solve_seconds": selection.solve_seconds}
    if created_at is not None:
        meta["created_at"] = created_at
    data["meta"] = meta
    return data


def serialize_selection(selection: DecoySelection, created_at: str | None = None) -> str:
    return json.dumps(selection_to_dict(selection, created_at), indent=2) + "\n"


def parse_selection(document: str | bytes, strict: bool = True) -> DecoySelection:
    data = _load_json(document)
    if not isinstance(data, dict):
        raise GraphFormatError("selection document must be an object")
    _check_fields(data, _SELECTION_FIELDS, "selection document", strict)
    if data.get("version") != 1:
        raise GraphFormatError(f"unsupported selection version {data.get('version')!r}")
    scheme = data.get("scheme")
    decoys = data.get("decoys")
    if not isinstance(scheme, str) or not isinstance(decoys, list):
        raise GraphFormatError("selection needs a 'scheme' string and 'decoys' array")
    try:
        cost = Fraction(data.get("cost"))
    except (TypeError, ValueError) as exc:
        raise GraphFormatError(f"bad selection cost {data.get('cost')!r}") from exc
    meta = data.get("meta") or {}
    return DecoySelection(
        scheme=scheme,
        decoys=frozenset(decoys),
        cost=cost,
        params=dict(data.get("params") or {}),
        optimal=bool(data.get("optimal", False)),
        solve_seconds=float(meta.get("solve_seconds", 0.0)),
    )


def load_selection(path: str | Path, strict: bool = True) -> DecoySelection:
    return parse_selection(Path(path).read_bytes(), strict=strict)


def save_selection(
    selection: DecoySelection, path: str | Path, created_at: str | None = None
) -> None:
    Path(path).write_text(serialize_selection(selection, created_at), encoding="utf-8")
