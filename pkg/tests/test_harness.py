import csv
import json
from collections import defaultdict

import numpy as np
import pytest

from scorelab import harness
from scorelab.cli import main
from scorelab.harness import RESULT_COLUMNS, ConfigError, ExperimentConfig, ReportError

SMALL = {"trials": 2, "rhos": [0.9, 1.0], "nes_audio": {"max_iter": 50}, "nes_latent": {"max_iter": 50}}


def small(tmp_path, **kw):
    return ExperimentConfig.from_dict({**SMALL, "out": str(tmp_path), **kw})


def test_config_round_trip():
    cfg = ExperimentConfig(trials=3, rhos=(0.5,), nes_latent={"sigma": 0.2})
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert ExperimentConfig.from_json(cfg.to_json()).config_hash() == cfg.config_hash()


def test_hash_ignores_output_location():
    assert ExperimentConfig(out="a").config_hash() == ExperimentConfig(out="b", workers=4).config_hash()
    assert ExperimentConfig(seed=1).config_hash() != ExperimentConfig(seed=2).config_hash()


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"nes_audio": {"bogus": 1}},
    {"train": {"bogus": 1}},
    {"methods": ["fakebob"]},
    {"thresholds": ["tau_X"]},
    {"rhos": [1.5]},
    {"kind": "saturating"},
    {"trials": -1},
])
def test_config_rejects(doc):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_calibrate_defaults():
    cal = harness.calibrate(ExperimentConfig(rhos=(0.9,)))
    rep = cal["0.9"]
    assert rep["eer"] < 0.05
    assert (rep["p_target"], rep["c_miss"], rep["c_fa"]) == (0.01, 1.0, 1.0)
    assert rep["warnings"] == []


def test_calibrate_separable_world():
    cal = harness.calibrate(ExperimentConfig(rhos=(1.0,), within_spread=0.0))
    assert cal["1.0"]["eer"] == 0.0


def test_calibrate_small_population_warns():
    cal = harness.calibrate(ExperimentConfig(rhos=(1.0,), identities=3, per_identity=2))
    assert cal["1.0"]["warnings"]


def test_trials_zero(tmp_path):
    cfg = small(tmp_path, trials=0)
    assert harness.run_attacks(cfg) == ([], {}, [])
    assert harness.attack_to_dir(cfg) == []
    assert (tmp_path / "results.csv").read_text().strip() == ",".join(RESULT_COLUMNS)


def test_sp_single_victim(tmp_path):
    cfg = small(tmp_path, trials=1, rhos=[1.0], methods=["sp"], thresholds=["tau_E"])
    rows, _, summary = harness.run_attacks(cfg)
    assert rows[0]["success"] and rows[0]["total_queries"] == 50 == rows[0]["queries_at_success"]
    assert summary[0]["asr"] == 1.0 and summary[0]["mean_queries"] == 50


def test_attack_outputs_and_schema(tmp_path):
    cfg = small(tmp_path)
    summary = harness.attack_to_dir(cfg)
    assert {p.name for p in tmp_path.iterdir()} >= {"results.csv", "summary.txt", "meta.json", "traces", "calibration.json"}
    assert len(summary) == len(harness.METHODS) * 2 * 2
    rows = list(csv.DictReader((tmp_path / "results.csv").open()))
    assert tuple(rows[0]) == RESULT_COLUMNS
    assert len(rows) == 2 * 2 * len(harness.METHODS) * 2
    assert not any(r["error"] for r in rows)
    traces = list((tmp_path / "traces").glob("*.jsonl"))
    assert len(traces) == 2 * 2 * 2 * 2
    first = json.loads(traces[0].read_text().splitlines()[0])
    assert set(first) == {"iteration", "queries", "best_score"}
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["config_hash"] == cfg.config_hash() and meta["seed"] == cfg.seed


def test_ledger_reconciliation(tmp_path):
    cfg = small(tmp_path)
    harness.attack_to_dir(cfg)
    rows = list(csv.DictReader((tmp_path / "results.csv").open()))
    for r in rows:
        if r["method"] in ("latent-nes", "audio-nes"):
            name = f"{r['method']}__{r['threshold']}__rho{float(r['rho']):g}__v{int(r['victim']):03d}.jsonl"
            last = json.loads((tmp_path / "traces" / name).read_text().splitlines()[-1])
            assert last["queries"] == int(r["total_queries"])
        else:
            assert int(r["total_queries"]) == cfg.m


def test_summary_recomputable_from_raw_rows(tmp_path):
    """Golden check: an independent aggregation of results.csv reproduces summary.txt."""
    cfg = small(tmp_path)
    harness.attack_to_dir(cfg)
    groups = defaultdict(list)
    for r in csv.DictReader((tmp_path / "results.csv").open()):
        groups[(r["method"], r["threshold"], float(r["rho"]))].append(r)
    text = (tmp_path / "summary.txt").read_text()
    for (method, th, rho), rs in groups.items():
        wins = [int(r["queries_at_success"]) for r in rs if r["success"] == "True"]
        asr = f"{100 * len(wins) / len(rs):.1f}%"
        q = f"{sum(wins) / len(wins):.1f}" if wins else "-"
        line = next(l for l in text.splitlines() if l.split()[:3] == [method, th, f"{rho:.2f}"])
        assert line.split()[4:6] == [asr, q]


def test_determinism_and_workers(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    harness.attack_to_dir(small(a))
    harness.attack_to_dir(small(b))
    harness.attack_to_dir(small(c, workers=4))
    ref = (a / "results.csv").read_bytes()
    assert (b / "results.csv").read_bytes() == ref == (c / "results.csv").read_bytes()
    assert harness.report(a)[0] == harness.report(b)[0]
    assert (a / "report.txt").read_bytes() == (b / "report.txt").read_bytes()


def test_different_seed_changes_results(tmp_path):
    harness.attack_to_dir(small(tmp_path / "a", methods=["audio-nes"]))
    harness.attack_to_dir(small(tmp_path / "b", methods=["audio-nes"], seed=9))
    assert (tmp_path / "a/results.csv").read_bytes() != (tmp_path / "b/results.csv").read_bytes()


def test_trial_errors_are_recorded(tmp_path):
    # m = 100 exceeds the 64-direction probe frame: every SP trial records the error and the run continues
    cfg = small(tmp_path, methods=["sp", "latent-nes"], m=100, trials=1)
    rows, _, summary = harness.run_attacks(cfg)
    sp = [r for r in rows if r["method"] == "sp"]
    assert all("InfeasibleDeltaError" in r["error"] and not r["success"] for r in sp)
    assert any(r["method"] == "latent-nes" and not r["error"] for r in rows)
    assert next(s for s in summary if s["method"] == "sp")["errors"] == 1


def test_report_errors(tmp_path):
    with pytest.raises(ReportError) as err:
        harness.report(tmp_path)
    assert "no result files" in err.value.problems
    (tmp_path / "results.csv").write_text("garbage,header\n1,2\n")
    (tmp_path / "calibration.json").write_text("{not json")
    with pytest.raises(ReportError) as err:
        harness.report(tmp_path)
    assert len(err.value.problems) == 2


def test_cli_end_to_end(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({**SMALL, "ablation_runs": 1, "train": {"steps": 100},
                                    "angles": [0, 20]}))
    out = tmp_path / "out"
    assert main(["calibrate", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert "tau_E" in capsys.readouterr().out
    assert main(["attack", "--config", str(cfg_path), "--out", str(out), "--method", "sp,latent-nes",
                 "--trials", "1", "--seed", "3"]) == 0
    assert "latent-nes" in capsys.readouterr().out
    assert main(["train-inverse", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert main(["id-constraints", "--config", str(cfg_path), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    for section in ("calibration", "attacks", "inverse-training ablation", "angular robustness"):
        assert section in text
    assert (out / "report.csv").exists()


def test_cli_error_codes(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 1
    assert "no result files" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"unknown_key": 1}')
    assert main(["attack", "--config", str(bad)]) == 2
    assert main(["attack", "--out", str(tmp_path), "--method", "nope"]) == 2


def test_id_constraints_rows():
    rows = harness.id_constraints(ExperimentConfig(angles=(0, 20, 40), train={"steps": 300}))
    analytic = [r for r in rows if r["inverse"] == "analytic"]
    assert [r["mean"] for r in analytic] == pytest.approx([1.0, np.cos(np.deg2rad(20)), np.cos(np.deg2rad(40))], abs=1e-6)
    assert {r["inverse"] for r in rows} == {"analytic", "trained"}
