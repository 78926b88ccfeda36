import json

import pytest

from bsvielab.harness import cli
from bsvielab.harness.hypotheses import CONDITION_ORDER, HypothesisReport
from bsvielab.harness.report import emit_report, render_report
from bsvielab.harness.runner import ComparisonVerdict, ScenarioConfig, run_experiment
from bsvielab.harness.scenarios import REGISTRY, scenario_names


def test_registry_contains_gallery_and_theorem_families():
    names = scenario_names()
    for expected in ("ex2.6", "ex2.7", "ex2.8", "ex2.10", "ex3.3", "ex3.4", "ex3.5", "ex3.8"):
        assert expected in names
    assert any(n.startswith("thm2.5") for n in names)
    assert any(n.startswith("thm3.2") for n in names)
    assert any(n.startswith("thm3.10") for n in names)


def test_every_scenario_declares_expected_verdict():
    for name, entry in REGISTRY.items():
        assert entry.expected_holds in (True, False)
        assert entry.description


def test_hypothesis_culprits_match_the_analysis():
    expectations = {
        "ex3.3": "free_term_monotone",
        "ex3.4": "kernel_t_monotone",
        "ex2.7": "free_term_monotone",
        "ex2.8": "diffusion_t_free",
        "ex2.10": "kernel_t_monotone",
    }
    for name, culprit in expectations.items():
        v = run_experiment(ScenarioConfig(scenario=name))
        assert v.hypotheses.status(culprit) == "violated", name
    v = run_experiment(ScenarioConfig(scenario="ex3.5"))
    assert v.hypotheses.all_satisfied()
    assert v.conclusion_held
    v = run_experiment(ScenarioConfig(scenario="ex3.8"))
    assert v.hypotheses.status("zeta_coeff_s_free") == "violated"


def test_counterexamples_fail_and_families_hold():
    quick = {
        "ex2.6": False, "ex3.3": False,
        "thm2.3-random": True, "bsde-duality-random": True,
    }
    for name, holds in quick.items():
        v = run_experiment(ScenarioConfig(scenario=name))
        assert v.conclusion_held is holds
        assert v.agrees_with_expectation
        assert v.conclusion_held == (v.worst_violation <= v.tolerance)


def test_bsde_comparison_family_holds_at_pinned_seed():
    v = run_experiment(ScenarioConfig(scenario="thm2.5-random", seed=7, trials=50))
    assert v.conclusion_held


def test_every_registry_scenario_agrees_with_its_expected_verdict():
    from bsvielab.harness.runner import run_suite

    verdicts = run_suite()
    for v in verdicts:
        assert v.agrees_with_expectation, v.scenario
    # scenario-level parallelism is a pure fan-out: identical results
    parallel = run_suite(jobs=4)
    assert render_report(verdicts, "csv") == render_report(parallel, "csv")


def test_run_experiment_is_deterministic():
    a = run_experiment(ScenarioConfig(scenario="thm2.5-random", trials=20))
    b = run_experiment(ScenarioConfig(scenario="thm2.5-random", trials=20))
    assert a.worst_violation == b.worst_violation
    assert a.witness == b.witness


def test_seed_changes_the_draws():
    a = run_experiment(ScenarioConfig(scenario="bsde-duality-random", trials=10, seed=1))
    b = run_experiment(ScenarioConfig(scenario="bsde-duality-random", trials=10, seed=2))
    assert a.worst_violation != b.worst_violation


def _dummy_verdict(name="demo", held=True) -> ComparisonVerdict:
    return ComparisonVerdict(
        scenario=name, theorem="bsde-comparison",
        hypotheses=HypothesisReport.not_applicable(),
        conclusion_held=held, worst_violation=-1.5e-13, tolerance=0.0,
        witness="trial=0", depth=8, seed=1, runtime_ms=12.5, expected_holds=held,
    )


def test_emit_report_trivial_csv(tmp_path):
    path = str(tmp_path / "r.csv")
    emit_report([_dummy_verdict()], "csv", path)
    lines = open(path).read().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("scenario,theorem,hypothesis_flags,conclusion_held")
    assert lines[1].startswith("demo,bsde-comparison,")


def test_emit_report_identical_bytes(tmp_path):
    verdicts = [_dummy_verdict("a"), _dummy_verdict("b", held=False)]
    p1, p2 = str(tmp_path / "1.csv"), str(tmp_path / "2.csv")
    emit_report(verdicts, "csv", p1)
    emit_report(list(reversed(verdicts)), "csv", p2)  # order-insensitive
    assert open(p1, "rb").read() == open(p2, "rb").read()
    j1 = render_report(verdicts, "json")
    assert json.loads(j1)[0]["scenario"] == "a"


def test_emit_report_serializes_17_significant_digits():
    text = render_report([_dummy_verdict()], "csv")
    assert "-1.4999999999999999e-13" in text  # 17 significant digits of -1.5e-13


def test_emit_report_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], "csv", str(tmp_path / "x.csv"))


def test_cli_list_and_exit_codes(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert "ex2.6" in out and "thm3.10-random" in out
    assert cli.main(["run", "--scenario", "no-such-thing"]) == 2
    assert cli.main(["run", "--scenario", "ex2.6"]) == 0  # fails as predicted
    out = capsys.readouterr().out
    assert "fails as predicted" in out
    assert cli.main(["run", "--scenario", "thm3.10-random", "--seed", "1"]) == 0


def test_cli_config_document_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "bsde-duality-random", "trials": 5, "seed": 3}))
    out_file = tmp_path / "verdict.csv"
    code = cli.main(["run", "--config", str(cfg), "--trials", "4", "--out", str(out_file)])
    assert code == 0
    text = out_file.read_text()
    assert "bsde-duality-random" in text and text.count("\n") == 2


def test_cli_hypotheses_subcommand(capsys):
    assert cli.main(["hypotheses", "--scenario", "ex3.4"]) == 0
    out = capsys.readouterr().out
    assert "kernel_t_monotone" in out and "violated" in out
    for cond in CONDITION_ORDER:
        assert cond in out


def test_out_dir_env_var(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BSVIELAB_OUT", str(tmp_path / "reports"))
    assert cli.main(["run", "--scenario", "ex2.6", "--out", "e.csv"]) == 0
    assert (tmp_path / "reports" / "e.csv").exists()
