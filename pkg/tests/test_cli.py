"""Command-line interface: pipe composability and exit codes."""

import json

import pytest

from decoyplan.cli import main
from decoyplan.fixtures import fig2_path


@pytest.fixture
def workspace(tmp_path):
    graph = tmp_path / "graph.json"
    graph.write_bytes(fig2_path().read_bytes())
    scenario = tmp_path / "scenario.json"
    scenario.write_text(
        '{"sources": ["userRights"], "targets": ["infectedComputer"]}\n'
    )
    return tmp_path, graph, scenario


def test_validate_ok(workspace, capsys):
    _, graph, _ = workspace
    assert main(["validate", str(graph)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"valid": True, "nodes": 7, "edges": 9}


def test_validate_bad_graph(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "nodes": [], "edges": [["a", "b"]]}')
    assert main(["validate", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == 5


def test_usage_errors():
    assert main([]) == 1
    assert main(["select", "--scheme", "optimal", "--out", "x.json"]) == 1


def test_pipeline_profile_select_evaluate(workspace, capsys):
    tmp, graph, scenario = workspace
    profile = tmp / "profile.json"
    selection = tmp / "selection.json"

    assert main(["profile", "--graph", str(graph), "--scenario", str(scenario),
                 "--out", str(profile)]) == 0
    capsys.readouterr()

    assert main(["select", "--profile", str(profile), "--scheme", "optimal",
                 "--beta", "1", "--out", str(selection)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["decoys"] == ["rightToLeftOverride", "shortcutModification"]

    assert main(["evaluate", "--graph", str(graph), "--scenario", str(scenario),
                 "--selection", str(selection)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["interception_ratio"] == 1.0
    assert report["decoy_count"] == 2
    assert report["prevented_outcomes"] == 1


def test_select_from_graph_and_scenario(workspace, capsys):
    tmp, graph, scenario = workspace
    selection = tmp / "sel.json"
    assert main(["select", "--graph", str(graph), "--scenario", str(scenario),
                 "--scheme", "predecessor", "--out", str(selection)]) == 0
    data = json.loads(selection.read_text())
    assert data["scheme"] == "predecessor"
    assert "maliciousFile" in data["decoys"]


def test_select_random_defaults_to_optimal_size(workspace, capsys):
    tmp, graph, scenario = workspace
    selection = tmp / "sel.json"
    assert main(["select", "--graph", str(graph), "--scenario", str(scenario),
                 "--scheme", "random", "--seed", "4", "--out", str(selection)]) == 0
    data = json.loads(selection.read_text())
    assert len(data["decoys"]) == 2  # sized from the optimal run


def test_select_group_requires_catalog(workspace):
    tmp, graph, scenario = workspace
    assert main(["select", "--graph", str(graph), "--scenario", str(scenario),
                 "--scheme", "group", "--out", str(tmp / "sel.json")]) == 1


def test_select_group_with_catalog(workspace, capsys):
    tmp, graph, scenario = workspace
    catalog = tmp / "groups.json"
    catalog.write_text('{"apt": ["shortcutModification", "rightToLeftOverride"]}')
    selection = tmp / "sel.json"
    assert main(["select", "--graph", str(graph), "--scenario", str(scenario),
                 "--scheme", "group", "--catalog", str(catalog),
                 "--gamma", "0", "--rho", "1", "--out", str(selection)]) == 0
    data = json.loads(selection.read_text())
    assert data["decoys"] == ["rightToLeftOverride", "shortcutModification"]


def test_select_infeasible_exit_code(tmp_path):
    graph = tmp_path / "graph.json"
    graph.write_text(json.dumps({
        "version": 1,
        "nodes": [
            {"id": "a", "name": "a", "kind": "technique", "gate": "or"},
            {"id": "t", "name": "t", "kind": "outcome", "gate": "or"},
        ],
        "edges": [["a", "t"]],
    }))
    scenario = tmp_path / "scn.json"
    scenario.write_text('{"sources": ["a"], "targets": ["t"]}')
    code = main(["select", "--graph", str(graph), "--scenario", str(scenario),
                 "--scheme", "optimal", "--out", str(tmp_path / "sel.json")])
    assert code == 3


def test_evaluate_csv_row(workspace, capsys):
    tmp, graph, scenario = workspace
    selection = tmp / "sel.json"
    main(["select", "--graph", str(graph), "--scenario", str(scenario),
          "--scheme", "optimal", "--out", str(selection)])
    capsys.readouterr()
    assert main(["evaluate", "--graph", str(graph), "--scenario", str(scenario),
                 "--selection", str(selection), "--csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("scheme,beta,gamma,rho,seed,n_targets,")
    assert lines[1].startswith("optimal,1,")


def test_generate_and_validate(tmp_path, capsys):
    out = tmp_path / "gen.json"
    assert main(["generate", "--techniques", "12", "--outcomes", "5", "--layers", "3",
                 "--seed", "2", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["validate", str(out)]) == 0


def test_generate_degenerate_exit_code(tmp_path):
    assert main(["generate", "--layers", "0", "--out", str(tmp_path / "g.json")]) == 2


def test_dump_model(workspace, capsys):
    tmp, graph, scenario = workspace
    out = tmp / "model.lp"
    assert main(["dump-model", "--graph", str(graph), "--scenario", str(scenario),
                 "--beta", "2", "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["variables"] == 24
    assert info["constraints"] == 39
    text = out.read_text()
    assert "Minimize" in text and "Binary" in text


def test_experiment_command(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "generator": {"n_techniques": 14, "n_outcomes": 6, "layers": 3, "seed": 5},
        "n_instances": 2,
        "target_counts": [1],
        "master_seed": 7,
    }))
    out_dir = tmp_path / "results"
    assert main(["experiment", "--config", str(config), "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "results.csv").exists()
    assert (out_dir / "aggregates.csv").exists()
    data = json.loads((out_dir / "results.json").read_text())
    assert data["incidents"]["infeasible"] == 0
    assert "created_at" in data["meta"]


def test_pretty_output(workspace, capsys):
    _, graph, _ = workspace
    assert main(["validate", str(graph), "--pretty"]) == 0
    out = capsys.readouterr().out
    assert "valid: True" in out


def test_env_var_overrides(workspace, monkeypatch, capsys):
    tmp, graph, scenario = workspace
    profile = tmp / "profile.json"
    monkeypatch.setenv("DECOYPLAN_PATH_CAP", "1")
    assert main(["profile", "--graph", str(graph), "--scenario", str(scenario),
                 "--out", str(profile)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["truncated"] is True
    assert out["paths"] == 1


def test_solver_budget_timeout_exit_code(workspace, monkeypatch, capsys):
    tmp, graph, scenario = workspace
    selection = tmp / "sel.json"
    monkeypatch.setenv("DECOYPLAN_SOLVER_BUDGET", "0")
    code = main(["select", "--graph", str(graph), "--scenario", str(scenario),
                 "--scheme", "optimal", "--out", str(selection)])
    assert code == 4
    # the incumbent is still written and still separates
    data = json.loads(selection.read_text())
    assert data["optimal"] is False
    assert data["decoys"]


def test_select_chain_fixture(tmp_path, capsys):
    graph = tmp_path / "chain.json"
    graph.write_text(json.dumps({
        "version": 1,
        "nodes": [
            {"id": "a", "name": "a", "kind": "technique", "gate": "or"},
            {"id": "s", "name": "s", "kind": "outcome", "gate": "or"},
            {"id": "t", "name": "t", "kind": "outcome", "gate": "or"},
        ],
        "edges": [["a", "t"], ["s", "a"]],
    }))
    scenario = tmp_path / "scn.json"
    scenario.write_text('{"sources": ["s"], "targets": ["t"]}')
    selection = tmp_path / "sel.json"
    assert main(["select", "--graph", str(graph), "--scenario", str(scenario),
                 "--scheme", "optimal", "--beta", "1", "--out", str(selection)]) == 0
    assert json.loads(selection.read_text())["decoys"] == ["a"]


def test_identical_invocations_bit_identical_outside_meta(workspace, capsys):
    tmp, graph, scenario = workspace
    payloads = []
    for name in ("one.json", "two.json"):
        out = tmp / name
        assert main(["select", "--graph", str(graph), "--scenario", str(scenario),
                     "--scheme", "optimal", "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        data.pop("meta")
        payloads.append(json.dumps(data, sort_keys=True))
    assert payloads[0] == payloads[1]


def test_help_available_everywhere(capsys):
    import pytest as _pytest

    for args in (["--help"], ["select", "--help"], ["experiment", "--help"]):
        with _pytest.raises(SystemExit) as exc:
            main(args)
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out.lower()


def test_experiment_dump_profiles(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "generator": {"n_techniques": 14, "n_outcomes": 6, "layers": 3, "seed": 5},
        "n_instances": 1,
        "target_counts": [1],
        "master_seed": 7,
        "dump_profiles": True,
    }))
    out_dir = tmp_path / "results"
    assert main(["experiment", "--config", str(config), "--out-dir", str(out_dir)]) == 0
    assert list((out_dir / "profiles").glob("profile_*.json"))
