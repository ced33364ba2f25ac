import csv
import json
import os
import subprocess
import sys

import pytest

from red import harness
from red.cli import main
from red.config import RunConfig, component_seed, from_dict, load_config, stable_hash
from red.errors import ConfigError, EmptyGrid, EmptySweep, ModelNotFound, NoRuns
from red.report import cmd_report, moving_average

# small enough that every pipeline test finishes in seconds
FAST = {
    "estimator": {"rnd": {"steps": 30, "target_hidden": [8], "predictor_hidden": [16], "embed_dim": 4},
                  "ae": {"steps": 30, "hidden": [8]}},
    "rl": {"dqn": {"total_steps": 300, "learning_starts": 50, "eval_interval": 100, "eval_episodes": 2,
                   "hidden_dims": [8], "eps_decay_steps": 100},
           "tabular": {"total_steps": 50000}},
    "score_grid": {"points": 11},
}


def fast_cfg(tmp_path, **changes) -> RunConfig:
    cfg = RunConfig().replace(**FAST).replace(out=str(tmp_path / "run"))
    return cfg.replace(**changes) if changes else cfg


def write_config(tmp_path, cfg: RunConfig, name="cfg.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(cfg.to_dict()))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults_validate(self):
        cfg = RunConfig().validate()
        assert cfg.estimator.kind == "rnd" and cfg.env == "simple"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            from_dict(RunConfig, {"estimator": {"kind": "rnd", "typo": 1}})

    def test_round_trip(self):
        cfg = RunConfig().replace(estimator={"kind": "ae"}, seed=42)
        assert from_dict(RunConfig, json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_bad_kind(self):
        with pytest.raises(ConfigError):
            RunConfig().replace(estimator={"kind": "gail"}).validate()

    def test_component_seed_rule(self):
        assert component_seed(5, "rl") == 5 ^ stable_hash("rl")
        assert component_seed(5, "rl") != component_seed(5, "dataset")
        assert component_seed(0, "x") == component_seed(0, "x")
        assert 0 <= component_seed(2**64 - 1, "x") < 2**64

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "none.json"))

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(str(p))


class TestFit:
    def test_kernel_full_rank_losses(self, tmp_path):
        cfg = fast_cfg(tmp_path, estimator={"kind": "kernel", "kernel": {"m": 5, "ridge": 1e-10}},
                       dataset={"n": 5})
        stats = harness.cmd_fit(cfg)
        saved = json.loads((tmp_path / "run" / "stats.json").read_text())
        assert len(saved["losses"]) == 5
        assert max(saved["losses"]) <= 1e-6
        assert stats["sigma1"] == saved["sigma1"]

    def test_rnd_quantiles_monotone(self, tmp_path):
        stats = harness.cmd_fit(fast_cfg(tmp_path, dataset={"n": 100}))
        q = stats["quantiles"]
        assert q["q50"] <= q["q90"] <= q["max"]

    def test_writes_artifacts(self, tmp_path):
        harness.cmd_fit(fast_cfg(tmp_path))
        assert {"scorer.json", "reward.json", "stats.json", "dataset.csv", "dataset.csv.json"} <= set(
            os.listdir(tmp_path / "run"))

    def test_dataset_from_path(self, tmp_path):
        from red.envs import generate_expert_dataset

        path = str(tmp_path / "d.csv")
        generate_expert_dataset("simple", 7, seed=1).save(path)
        stats = harness.cmd_fit(fast_cfg(tmp_path, dataset={"path": path}))
        assert stats["n"] == 7


class TestScore:
    def test_exact_training_pairs_reward_one(self, tmp_path):
        pairs = [[x, 0, "right"] for x in range(7)] + [[7, y, "up"] for y in range(7)]
        cfg = fast_cfg(tmp_path, env="grid", estimator={"kind": "exact"}, dataset={"n": 1},
                       score_grid={"pairs": pairs})
        harness.cmd_fit(cfg)
        rows = read_csv(harness.cmd_score(cfg))
        assert len(rows) == 14
        assert all(float(r["reward"]) == 1.0 for r in rows)

    def test_simple_columns_and_size(self, tmp_path):
        cfg = fast_cfg(tmp_path)
        harness.cmd_fit(cfg)
        path = harness.cmd_score(cfg)
        assert open(path).readline().strip() == "s,a,score,reward,viz_reward"
        assert len(read_csv(path)) == 22

    def test_default_grid_is_201_points(self):
        assert RunConfig().score_grid.points == 201

    def test_empty_grid(self, tmp_path):
        cfg = fast_cfg(tmp_path)
        harness.cmd_fit(cfg)
        with pytest.raises(EmptyGrid):
            harness.cmd_score(cfg.replace(score_grid={"points": 0}))

    def test_model_not_found(self, tmp_path):
        with pytest.raises(ModelNotFound):
            harness.cmd_score(fast_cfg(tmp_path))


class TestTrain:
    def test_byte_identical_curves(self, tmp_path):
        a = fast_cfg(tmp_path).replace(out=str(tmp_path / "a"))
        b = a.replace(out=str(tmp_path / "b"))
        harness.cmd_train(a)
        harness.cmd_train(b)
        ca = (tmp_path / "a" / "curve.csv").read_bytes()
        assert ca == (tmp_path / "b" / "curve.csv").read_bytes()
        assert ca.splitlines()[0] == b"env_step,true_reward_per_step,true_reward_per_episode,eval_std,seed"

    def test_seed_changes_run(self, tmp_path):
        a = fast_cfg(tmp_path).replace(out=str(tmp_path / "a"))
        harness.cmd_train(a)
        harness.cmd_train(a.replace(out=str(tmp_path / "b"), seed=1))
        assert (tmp_path / "a" / "dataset.csv").read_bytes() != (tmp_path / "b" / "dataset.csv").read_bytes()

    def test_record_contents(self, tmp_path):
        record = harness.cmd_train(fast_cfg(tmp_path))
        saved = json.loads((tmp_path / "run" / "run_record.json").read_text())
        assert saved["format_version"] == 1
        assert {"config", "scorer", "sigma1", "mean_expert_reward", "curve", "final", "wall_clock_s"} <= set(saved)
        assert [r["env_step"] for r in record["curve"]] == [100, 200, 300]
        # the snapshot alone reproduces the run
        replay = from_dict(RunConfig, saved["config"]).replace(out=str(tmp_path / "replay"))
        harness.cmd_train(replay)
        assert (tmp_path / "replay" / "curve.csv").read_bytes() == (tmp_path / "run" / "curve.csv").read_bytes()

    def test_exact_grid_matches_expert(self, tmp_path):
        cfg = fast_cfg(tmp_path, env="grid", estimator={"kind": "exact"}, dataset={"n": 1})
        record = harness.cmd_train(cfg)
        assert record["expert_agreement"] == 1.0


class TestExperiment:
    def test_cross_product_rows(self, tmp_path):
        cfg = fast_cfg(tmp_path, sweep={"estimators": ["rnd", "ae", "kernel"], "sizes": [5, 10, 50, 100], "seeds": 5})
        cfg = cfg.replace(rl={"dqn": {"total_steps": 20, "learning_starts": 10, "eval_interval": 20,
                                      "eval_episodes": 1}}, score_grid={"points": 0})
        rows, ok = harness.cmd_experiment(cfg)
        assert ok and len(rows) == 60
        table = read_csv(tmp_path / "run" / "experiment.csv")
        assert len(table) == 60
        assert list(table[0]) == ["estimator", "n", "seed", "final_per_step", "final_per_episode", "status"]
        assert len(read_csv(tmp_path / "run" / "summary.csv")) == 12

    def test_empty_sweep(self, tmp_path):
        with pytest.raises(EmptySweep):
            harness.cmd_experiment(fast_cfg(tmp_path))

    def test_failed_cell_recorded(self, tmp_path):
        cfg = fast_cfg(tmp_path, sweep={"estimators": ["exact"], "sizes": [5], "seeds": 1})
        rows, ok = harness.cmd_experiment(cfg)
        assert not ok
        assert rows[0][5] == "error:NonDiscreteInput"

    def test_parallel_matches_serial(self, tmp_path):
        cfg = fast_cfg(tmp_path, sweep={"estimators": ["rnd"], "sizes": [5], "seeds": 2})
        cfg = cfg.replace(rl={"dqn": {"total_steps": 40, "learning_starts": 10, "eval_interval": 20}})
        harness.cmd_experiment(cfg.replace(out=str(tmp_path / "s")))
        harness.cmd_experiment(cfg.replace(out=str(tmp_path / "p")), jobs=2)
        assert (tmp_path / "s" / "experiment.csv").read_bytes() == (tmp_path / "p" / "experiment.csv").read_bytes()


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sweep")
    cfg = fast_cfg(tmp, sweep={"estimators": ["rnd", "ae", "kernel"], "sizes": [10], "seeds": 2})
    harness.cmd_experiment(cfg)
    return tmp / "run"


class TestReport:
    def test_single_run_one_polyline(self, tmp_path):
        harness.cmd_train(fast_cfg(tmp_path))
        lines, written = cmd_report(str(tmp_path / "run"))
        svg = (tmp_path / "run" / "learning_curves.svg").read_text()
        assert svg.count('class="curve"') == 1
        assert any(p.endswith("reward_map.svg") for p in written)
        assert (tmp_path / "run" / "reward_map.svg").read_text().count('class="curve"') == 2

    def test_three_estimators_three_bands(self, sweep_dir):
        cmd_report(str(sweep_dir))
        svg = (sweep_dir / "learning_curves.svg").read_text()
        assert svg.count('class="curve"') == 3
        assert svg.count('class="band"') == 3

    def test_deterministic_svg(self, sweep_dir):
        cmd_report(str(sweep_dir))
        first = (sweep_dir / "learning_curves.svg").read_bytes()
        cmd_report(str(sweep_dir))
        assert (sweep_dir / "learning_curves.svg").read_bytes() == first

    def test_corrupted_record_skipped(self, tmp_path):
        harness.cmd_train(fast_cfg(tmp_path))
        bad = tmp_path / "run" / "broken"
        bad.mkdir()
        (bad / "run_record.json").write_text("{oops")
        lines, _ = cmd_report(str(tmp_path / "run"))
        assert any(line.startswith("WARNING") for line in lines)

    def test_no_runs(self, tmp_path):
        with pytest.raises(NoRuns):
            cmd_report(str(tmp_path))

    def test_smoothing(self, tmp_path):
        harness.cmd_train(fast_cfg(tmp_path))
        raw = (cmd_report(str(tmp_path / "run"), smooth=1), (tmp_path / "run" / "learning_curves.svg").read_text())
        cmd_report(str(tmp_path / "run"), smooth=3)
        assert (tmp_path / "run" / "learning_curves.svg").read_text() != raw[1]
        with pytest.raises(ConfigError):
            cmd_report(str(tmp_path / "run"), smooth=0)

    def test_moving_average(self):
        assert moving_average([1.0, 2.0, 3.0, 4.0], 2).tolist() == [1.0, 1.5, 2.5, 3.5]


class TestCli:
    def test_missing_dataset_exit_2(self, tmp_path, capsys):
        cfg = fast_cfg(tmp_path, dataset={"path": str(tmp_path / "missing.csv")})
        code = main(["fit", "--config", write_config(tmp_path, cfg)])
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert code == 2
        assert err["error"]["kind"] == "DatasetNotFound"

    def test_unknown_key_exit_2(self, tmp_path, capsys):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"estimatr": {}}))
        assert main(["fit", "--config", str(p)]) == 2
        assert json.loads(capsys.readouterr().err)["error"]["kind"] == "ConfigError"

    def test_train_twice_identical(self, tmp_path, capsys):
        cfg = write_config(tmp_path, fast_cfg(tmp_path))
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "3"]) == 0
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "3"]) == 0
        assert (tmp_path / "a" / "curve.csv").read_bytes() == (tmp_path / "b" / "curve.csv").read_bytes()

    def test_fit_score_report(self, tmp_path, capsys):
        cfg = write_config(tmp_path, fast_cfg(tmp_path))
        assert main(["fit", "--config", cfg]) == 0
        assert main(["score", "--config", cfg]) == 0
        assert os.path.exists(tmp_path / "run" / "reward_map.csv")
        assert main(["report", "--out", str(tmp_path / "run")]) == 2  # fit/score alone leave no run record
        assert main(["train", "--config", cfg]) == 0
        assert main(["report", "--out", str(tmp_path / "run"), "--smooth", "2"]) == 0

    def test_experiment_failure_exit_3(self, tmp_path, capsys):
        cfg = fast_cfg(tmp_path, sweep={"estimators": ["exact"], "sizes": [5], "seeds": 1})
        assert main(["experiment", "--config", write_config(tmp_path, cfg)]) == 3

    def test_empty_sweep_exit_2(self, tmp_path, capsys):
        assert main(["experiment", "--config", write_config(tmp_path, fast_cfg(tmp_path))]) == 2

    def test_console_script(self, tmp_path):
        cfg = write_config(tmp_path, fast_cfg(tmp_path))
        proc = subprocess.run([sys.executable, "-m", "red.cli", "fit", "--config", cfg],
                              capture_output=True, text=True, env={**os.environ, "RED_LOG": "info"})
        assert proc.returncode == 0, proc.stderr
        assert "sigma1" in json.loads(proc.stdout)
        assert "INFO" in proc.stderr
