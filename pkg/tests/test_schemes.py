"""The four selection schemes and the group catalog format."""

import pytest

from conftest import graph_of, node, small_instance
from decoyplan import (
    CostModel,
    GroupCatalog,
    GroupParams,
    NoCompatibleGroupError,
    NotEnoughCandidatesError,
    Scenario,
    ValidationError,
    build_threat_profile,
    compatible_groups,
    select_group,
    select_optimal,
    select_predecessor,
    select_random,
)
from decoyplan.schemes import parse_catalog, serialize_catalog


def profile_of(spec, sources, targets, **overrides):
    g = graph_of(spec, **overrides)
    return build_threat_profile(g, Scenario(frozenset(sources), frozenset(targets)))


def catalog_of(**groups):
    return GroupCatalog.from_mapping(groups)


# -- catalog ------------------------------------------------------------------


def test_catalog_parse_and_serialize():
    text = '{"apt-zebra": ["a", "b"], "apt-yak": ["c"]}'
    catalog = parse_catalog(text)
    assert catalog.names() == ("apt-yak", "apt-zebra")
    assert catalog.techniques("apt-zebra") == {"a", "b"}
    round_tripped = parse_catalog(serialize_catalog(catalog))
    assert round_tripped == catalog


def test_catalog_rejects_duplicates_and_empties():
    with pytest.raises(ValidationError, match="duplicate group"):
        parse_catalog('{"g": ["a"], "g": ["b"]}')
    with pytest.raises(ValidationError, match="no techniques"):
        parse_catalog('{"g": []}')


def test_group_params_validation():
    with pytest.raises(ValidationError):
        GroupParams(gamma=1.5)
    with pytest.raises(ValidationError):
        GroupParams(rho=-0.1)


# -- optimal delegation -----------------------------------------------------------


def test_select_optimal_chain_and_fig2(fig2_profile):
    sel = select_optimal(profile_of("s>a a>t", {"s"}, {"t"}))
    assert sel.scheme == "optimal" and sel.sorted_decoys() == ("a",)
    sel = select_optimal(fig2_profile)
    assert sel.sorted_decoys() == ("rightToLeftOverride", "shortcutModification")


def test_select_optimal_beta_picks_unmitigated_cut():
    # diamond with one mitigated branch; equal-cardinality unmitigated cut exists
    profile = profile_of(
        "s>a s>b a>m b>m m>t", {"s"}, {"t"}, m={"gate": "and"}, a={"mitigated": True}
    )
    sel = select_optimal(profile, CostModel(beta=2))
    assert sel.sorted_decoys() == ("b",)


# -- compatible groups --------------------------------------------------------------


def test_compatible_groups_sole_predecessor():
    profile = profile_of("s>a a>t", {"s"}, {"t"})
    catalog = catalog_of(g1=["a"])
    for rho in (0.0, 0.5, 1.0):
        assert compatible_groups(profile, catalog, rho) == ["g1"]


def test_compatible_groups_unrelated_technique():
    profile = profile_of("s>a a>t s>b b>a", {"s"}, {"t"})
    catalog = catalog_of(g1=["b"])  # b never directly causes the target
    assert compatible_groups(profile, catalog, 0.5) == []
    assert compatible_groups(profile, catalog, 0.0) == []


def test_compatible_groups_threshold_arithmetic():
    profile = profile_of("s>a a>t1 s>b b>t2", {"s"}, {"t1", "t2"})
    catalog = catalog_of(g=["a"])  # reaches 1 of 2 targets
    assert compatible_groups(profile, catalog, 0.5) == ["g"]
    assert compatible_groups(profile, catalog, 0.6) == []
    assert compatible_groups(profile, catalog, 0.0) == ["g"]


# -- group selection -------------------------------------------------------------------


def test_select_group_intersects_profile():
    profile = profile_of("s>a a>t", {"s"}, {"t"})
    catalog = catalog_of(g1=["a", "offGraphTechnique"])
    sel = select_group(profile, catalog, GroupParams(gamma=0, rho=0, seed=1))
    assert sel.decoys == {"a"}
    assert sel.params["raw_technique_count"] == 2
    assert sel.params["groups"] == ["g1"]


def test_select_group_gamma_one_unions_all():
    profile = profile_of("s>a s>b a>t b>t", {"s"}, {"t"})
    catalog = catalog_of(g1=["a"], g2=["b"])
    sel = select_group(profile, catalog, GroupParams(gamma=1.0, rho=1.0, seed=5))
    assert sel.decoys == {"a", "b"}


def test_select_group_deterministic_per_seed():
    profile = profile_of("s>a s>b a>t b>t", {"s"}, {"t"})
    catalog = catalog_of(g1=["a"], g2=["b"], g3=["a", "b"])
    first = select_group(profile, catalog, GroupParams(gamma=0.4, rho=0.0, seed=9))
    second = select_group(profile, catalog, GroupParams(gamma=0.4, rho=0.0, seed=9))
    assert first.decoys == second.decoys
    assert first.params["groups"] == second.params["groups"]


def test_select_group_no_compatible_raises():
    profile = profile_of("s>a a>t", {"s"}, {"t"})
    catalog = catalog_of(g1=["unrelated"])
    with pytest.raises(NoCompatibleGroupError):
        select_group(profile, catalog, GroupParams(gamma=0, rho=0, seed=0))


# -- predecessor ------------------------------------------------------------------------


def test_select_predecessor_chain():
    sel = select_predecessor(profile_of("s>a a>t", {"s"}, {"t"}))
    assert sel.decoys == {"a"}
    assert sel.scheme == "predecessor"


def test_select_predecessor_shared_pred_counted_once():
    profile = profile_of("s>a a>t1 a>t2", {"s"}, {"t1", "t2"})
    sel = select_predecessor(profile)
    assert sel.decoys == {"a"}


def test_select_predecessor_fig2(fig2, fig2_profile):
    sel = select_predecessor(fig2_profile)
    expected = {
        t
        for t in fig2.predecessors("infectedComputer")
        if fig2.nodes[t].kind.value == "technique"
    }
    assert sel.decoys == expected
    assert "maliciousFile" in sel.decoys


# -- random ------------------------------------------------------------------------------


def test_select_random_full_pool():
    profile = profile_of("s>a s>b a>t b>t", {"s"}, {"t"})
    sel = select_random(profile, 2, seed=3)
    assert sel.decoys == {"a", "b"}


def test_select_random_k_zero_and_too_big():
    profile = profile_of("s>a a>t", {"s"}, {"t"})
    assert select_random(profile, 0, seed=1).decoys == frozenset()
    with pytest.raises(NotEnoughCandidatesError):
        select_random(profile, 5, seed=1)


def test_select_random_deterministic():
    graph, scenario, profile = small_instance(4)
    k = max(1, len(profile.candidate_techniques()) // 2)
    assert select_random(profile, k, seed=11).decoys == select_random(profile, k, seed=11).decoys


# -- shared invariants ----------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_all_schemes_return_profile_techniques_disjoint_from_scenario(seed):
    graph, scenario, profile = small_instance(seed)
    if not profile.paths:
        pytest.skip("no paths")
    catalog = catalog_of(
        g1=list(profile.candidate_techniques()[:2]) or ["zz"],
        g2=list(profile.graph.technique_ids()[:4]) or ["zz"],
    )
    k = min(2, len(profile.candidate_techniques()))
    selections = [select_predecessor(profile), select_random(profile, k, seed)]
    try:
        selections.append(select_optimal(profile))
    except Exception:
        pass
    try:
        selections.append(select_group(profile, catalog, GroupParams(0.5, 0.0, seed)))
    except NoCompatibleGroupError:
        pass
    techniques = set(profile.graph.technique_ids())
    forbidden = scenario.sources | scenario.targets
    for sel in selections:
        assert sel.decoys <= techniques
        assert not (sel.decoys & forbidden)


@pytest.mark.parametrize("seed", range(10))
def test_optimal_never_larger_than_predecessor(seed):
    graph, scenario, profile = small_instance(seed)
    if not profile.paths:
        pytest.skip("no paths")
    opt = select_optimal(profile)
    pred = select_predecessor(profile)
    assert len(opt.decoys) <= len(pred.decoys)


@pytest.mark.parametrize("seed", range(10))
def test_predecessor_separates_when_targets_fed_by_profile_techniques(seed):
    from decoyplan import is_separated

    graph, scenario, profile = small_instance(seed)
    if not profile.paths:
        pytest.skip("no paths")
    sel = select_predecessor(profile)
    scen = Scenario(
        frozenset(profile.present_sources()), frozenset(profile.present_targets())
    )
    only_inside = all(
        profile.graph.predecessors(t) == graph.predecessors(t)
        and all(p not in scenario.sources for p in graph.predecessors(t))
        for t in profile.present_targets()
    )
    if only_inside:
        assert is_separated(profile.graph, scen, sel.decoys)
