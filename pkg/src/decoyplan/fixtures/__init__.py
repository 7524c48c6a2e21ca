"""Bundled demo graphs for tests, docs, and quick CLI experiments."""

from importlib import resources
from pathlib import Path

from ..graph import AttackGraph, Scenario, parse_graph


def fig2_path() -> Path:
    """Path to the bundled demo graph (user-rights foothold, infected-computer target)."""
    return Path(resources.files(__package__) / "fig2.json")


def fig2_graph() -> AttackGraph:
    return parse_graph(fig2_path().read_bytes())


def fig2_scenario() -> Scenario:
    return Scenario(frozenset({"userRights"}), frozenset({"infectedComputer"}))
