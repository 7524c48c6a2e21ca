"""The four decoy-selection schemes behind one interface.

* ``optimal`` - the exact minimum-cost separator (delegates to the solver).
* ``group`` - exposes the techniques of real-world threat-actor groups
  sampled from a catalog, filtered by how many attack targets each group
  can reach (rho) and how large a share of the compatible pool to take
  (gamma).
* ``predecessor`` - exposes every technique that directly causes one of
  the attack targets.
* ``random`` - a uniform sample of the profile's techniques, usually sized
  to match the optimal selection so comparisons are fair.

All schemes return decoys drawn from the profile's technique nodes,
disjoint from the scenario's sources and targets, and are deterministic
given their seeds.
"""

from __future__ import annotations

import json
import logging
import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from .errors import (
    EmptyProfileError,
    GraphFormatError,
    NoCompatibleGroupError,
    NotEnoughCandidatesError,
    ValidationError,
)
from .paths import ThreatProfile
from .separator import CostModel, DecoySelection, SolverOptions, solve_optimal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupParams:
    """Sampling knobs for the group scheme."""

    gamma: float = 0.0
    rho: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValidationError("gamma must be in [0, 1]")
        if not 0 <= self.rho <= 1:
            raise ValidationError("rho must be in [0, 1]")
        if self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")


@dataclass(frozen=True)
class GroupCatalog:
    """Threat-actor groups mapped to the technique ids they are known to use.

    The catalog is graph-independent: ids that do not occur in a given
    profile are ignored at selection time (with a counted warning).
    """

    groups: tuple[tuple[str, frozenset[str]], ...]

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "GroupCatalog":
        groups = []
        for name in sorted(mapping):
            techniques = mapping[name]
            if not name:
                raise ValidationError("group with empty name")
            ids = frozenset(techniques)
            if not ids:
                raise ValidationError(f"group {name!r} has no techniques")
            if not all(isinstance(t, str) for t in ids):
                raise ValidationError(f"group {name!r} has non-string technique ids")
            groups.append((name, ids))
        return cls(tuple(groups))

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.groups)

    def techniques(self, name: str) -> frozenset[str]:
        for group_name, ids in self.groups:
            if group_name == name:
                return ids
        raise KeyError(name)


def parse_catalog(document: str | bytes) -> GroupCatalog:
    def reject_duplicates(pairs):
        seen = set()
        for key, _ in pairs:
            if key in seen:
                raise ValidationError(f"duplicate group name {key!r}")
            seen.add(key)
        return dict(pairs)

    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        data = json.loads(document, object_pairs_hook=reject_duplicates)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(data, dict):
        raise GraphFormatError("group catalog must be an object of name -> [ids]")
    for name, ids in data.items():
        if not isinstance(ids, list):
            raise GraphFormatError(f"group {name!r} must map to an array of ids")
    return GroupCatalog.from_mapping(data)


def load_catalog(path: str | Path) -> GroupCatalog:
    return parse_catalog(Path(path).read_bytes())


def serialize_catalog(catalog: GroupCatalog) -> str:
    return json.dumps({n: sorted(ids) for n, ids in catalog.groups}, indent=2) + "\n"


def _finish_selection(profile, scheme, decoys, params, started) -> DecoySelection:
    cost_model = CostModel()
    cost = sum(
        (cost_model.cost(profile.graph.nodes[d]) for d in decoys), Fraction(0)
    )
    return DecoySelection(
        scheme=scheme,
        decoys=frozenset(decoys),
        cost=cost,
        params=params,
        optimal=False,
        solve_seconds=time.perf_counter() - started,
    )


def select_optimal(
    profile: ThreatProfile,
    costs: CostModel | None = None,
    options: SolverOptions | None = None,
) -> DecoySelection:
    """The optimal scheme: exact minimum-cost separator."""
    return solve_optimal(profile, costs, options)


def compatible_groups(
    profile: ThreatProfile, catalog: GroupCatalog, rho: float
) -> list[str]:
    """Groups whose techniques directly cause at least a rho-share of the targets.

    A target counts for a group when at least one of its predecessors is a
    technique the group uses. With ``rho == 0`` a single reached target is
    enough. Result is lexicographically ordered.
    """
    present = profile.present_targets()
    if not present:
        raise EmptyProfileError("profile contains none of the scenario targets")
    total = len(profile.scenario.targets)
    names = []
    for name, techniques in catalog.groups:
        hits = sum(
            1 for t in present if profile.graph.predecessors(t) & techniques
        )
        if rho == 0:
            ok = hits >= 1
        else:
            ok = Fraction(hits, total) >= _as_rho_fraction(rho)
        if ok:
            names.append(name)
    return names


def _as_rho_fraction(rho: float) -> Fraction:
    return Fraction(rho).limit_denominator(10**9)


def select_group(
    profile: ThreatProfile, catalog: GroupCatalog, params: GroupParams
) -> DecoySelection:
    """Sample compatible groups and expose the union of their techniques.

    ``max(1, ceil(gamma * count))`` groups are drawn without replacement,
    so gamma = 0 still selects one group. Techniques outside the profile
    cannot sit on any enumerated attack path and are dropped (the raw
    count is echoed in the params for transparency).
    """
    started = time.perf_counter()
    compat = compatible_groups(profile, catalog, params.rho)
    if not compat:
        raise NoCompatibleGroupError(
            f"no group reaches the targets at rho={params.rho}"
        )
    take = max(1, math.ceil(params.gamma * len(compat)))
    rng = random.Random(params.seed)
    chosen = sorted(rng.sample(compat, take))
    raw: set[str] = set()
    for name in chosen:
        raw |= catalog.techniques(name)
    eligible = set(profile.candidate_techniques())
    decoys = frozenset(raw & eligible)
    dropped = len(raw) - len(decoys)
    if dropped:
        logger.warning(
            "group selection dropped %d technique id(s) outside the profile", dropped
        )
    return _finish_selection(
        profile,
        "group",
        decoys,
        {
            "gamma": params.gamma,
            "rho": params.rho,
            "seed": params.seed,
            "groups": chosen,
            "raw_technique_count": len(raw),
        },
        started,
    )


def select_predecessor(profile: ThreatProfile) -> DecoySelection:
    """Expose every technique that directly causes an attack target."""
    started = time.perf_counter()
    if not profile.paths:
        raise EmptyProfileError("threat profile has no attack paths")
    eligible = set(profile.candidate_techniques())
    decoys: set[str] = set()
    for target in profile.present_targets():
        decoys |= profile.graph.predecessors(target) & eligible
    return _finish_selection(profile, "predecessor", frozenset(decoys), {}, started)


def select_random(profile: ThreatProfile, k: int, seed: int) -> DecoySelection:
    """Uniform sample of k techniques from the profile (sources excluded)."""
    started = time.perf_counter()
    if k < 0:
        raise ValidationError("k must be non-negative")
    eligible = sorted(
        t for t in profile.graph.technique_ids() if t not in profile.scenario.sources
    )
    if k > len(eligible):
        raise NotEnoughCandidatesError(
            f"asked for {k} decoys but only {len(eligible)} techniques are eligible"
        )
    rng = random.Random(seed)
    decoys = frozenset(rng.sample(eligible, k))
    return _finish_selection(profile, "random", decoys, {"seed": seed, "k": k}, started)
