import json

import numpy as np
import pytest

from sumorl import data
from sumorl.cli import main
from sumorl.config import RunConfig, from_dict
from sumorl.errors import ConfigError

TINY = {
    "data": {"episodes": 10},
    "ensemble": {"n_members": 3, "hidden": [16, 16], "epochs": 2},
    "agent": {"hidden": [16, 16]},
    "pipeline": {"epochs": 2, "updates_per_epoch": 20, "rollouts_per_epoch": 20,
                 "eval_episodes": 2},
    "probe": {"n_starts": 10, "horizon": 20, "total_transitions": 150, "policy_steps": 40},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(TINY))
    return p


def jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_defaults_follow_hyperparameter_table():
    cfg = RunConfig()
    p = cfg.pipeline_config("mopo")
    assert (cfg.sumo.k, cfg.ensemble.n_members, p.alpha, p.lam, p.eta) == (1, 7, 5.0, 1.0, 0.9)
    assert (cfg.agent.actor_lr, p.batch_size) == (3e-4, 256)


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"sumo": {"kk": 2}},
    {"pipeline": {"lambda": 1}},
    {"pipeline": {"eta": 2.0}},
    {"sumo": {"k": 0}},
    {"sumo": {"metric": "chebyshev"}},
    {"data": {"policy": "oracle"}},
    {"env": "hopper"},
    {"seed": "x"},
    {"probe": {"n_starts": 0}},
    {"ensemble": "wide"},
])
def test_invalid_configs_rejected(raw):
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_config_round_trips_through_dict():
    cfg = from_dict(TINY)
    again = from_dict({k: v for k, v in cfg.to_dict().items()})
    assert again == cfg


def test_gen_data_writes_sumods(tmp_path):
    out = tmp_path / "d.sumods"
    assert main(["gen-data", "--env", "pointmass", "--policy", "expert", "--episodes", "20",
                 "--seed", "7", "--out", str(out)]) == 0
    ds = data.load(out)
    assert len(ds) == 2000 and ds.d_s == 4 and ds.d_a == 2
    meta = json.loads((tmp_path / "d.sumods.meta.json").read_text())
    assert meta["seed"] == 7 and meta["config"]["data"]["policy"] == "expert"
    assert meta["dataset_id"] == data.fingerprint(ds)


def test_eval_correlation_emits_two_reports(tmp_path, cfg_path):
    d = tmp_path / "d.sumods"
    main(["gen-data", "--policy", "expert", "--episodes", "20", "--seed", "7", "--out", str(d)])
    out = tmp_path / "r.jsonl"
    assert main(["eval-correlation", "--dataset", str(d), "--estimators", "sumo,loo-kl",
                 "--seed", "7", "--config", str(cfg_path), "--out", str(out)]) == 0
    recs = jsonl(out)
    assert recs[0]["type"] == "header" and recs[0]["seed"] == 7
    reports = [r for r in recs if r["type"] == "report"]
    assert [r["estimator"] for r in reports] == ["sumo", "loo-kl"]
    for r in reports:
        assert r["seed"] == 7 and r["n"] == 150 and -1 <= r["spearman"] <= 1


def test_run_amorel_twice_identical(tmp_path, cfg_path):
    for name in ("a", "b"):
        assert main(["run-amorel", "--config", str(cfg_path), "--seed", "7",
                     "--out", str(tmp_path / name)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "run.jsonl").read_bytes() == (b / "run.jsonl").read_bytes()
    assert (a / "policy.npz").read_bytes() == (b / "policy.npz").read_bytes()
    recs = jsonl(a / "run.jsonl")
    assert recs[0]["command"] == "run-amorel" and recs[-1]["type"] == "audit"
    assert recs[-1]["violations"] == 0


def test_seed_changes_output(tmp_path, cfg_path):
    for seed in ("1", "2"):
        main(["run-mopo", "--config", str(cfg_path), "--seed", seed,
              "--out", str(tmp_path / seed)])
    assert (tmp_path / "1" / "run.jsonl").read_bytes() != (tmp_path / "2" / "run.jsonl").read_bytes()


def test_ablate_emits_one_report_per_k(tmp_path, cfg_path):
    out = tmp_path / "ab.jsonl"
    assert main(["ablate", "--config", str(cfg_path), "--sweep", "k", "--values", "1,5,10",
                 "--seed", "3", "--out", str(out)]) == 0
    reports = [r for r in jsonl(out) if r["type"] == "report"]
    assert [r["value"] for r in reports] == [1, 5, 10]
    assert [r["params"]["k"] for r in reports] == [1, 5, 10]


def test_model_and_probe_files_are_reused(tmp_path, cfg_path):
    m, p = tmp_path / "m.npz", tmp_path / "p.npz"
    assert main(["train-dynamics", "--config", str(cfg_path), "--seed", "2", "--out", str(m)]) == 0
    assert main(["probe", "--config", str(cfg_path), "--model", str(m), "--seed", "2",
                 "--out", str(p)]) == 0
    out = tmp_path / "r.jsonl"
    assert main(["eval-correlation", "--config", str(cfg_path), "--model", str(m),
                 "--probe", str(p), "--estimators", "sumo,max-aleatoric,max-pairwise-diff",
                 "--seed", "2", "--out", str(out)]) == 0
    assert len([r for r in jsonl(out) if r["type"] == "report"]) == 3


def test_invalid_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"pipeline": {"horizon": 0}}')
    assert main(["run-mopo", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert "horizon" in capsys.readouterr().err
    bad.write_text("{not json")
    assert main(["run-mopo", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1


def test_unknown_estimator_exits_1(tmp_path, cfg_path):
    assert main(["eval-correlation", "--config", str(cfg_path), "--estimators", "magic"]) == 1


def test_missing_dataset_exits_1(tmp_path):
    assert main(["train-dynamics", "--dataset", str(tmp_path / "nope"), "--out", "m.npz"]) == 1


@pytest.mark.parametrize("argv", [["frobnicate"], ["run-mopo", "--bogus", "1", "--out", "x"],
                                  ["gen-data"], []])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2
