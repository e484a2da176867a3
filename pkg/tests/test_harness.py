import csv
import filecmp
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from leorate import cli, harness
from leorate.harness import ConfigError, load_config

SMALL = {"agent.train_episodes": 2, "agent.batch_size": 16, "agent.hidden_layers": [8]}


def write_yaml(tmp_path, data, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def default_table_abs():
    return str(harness.default_config_path().parent / "quality_table.csv")


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.q_max == 5_308_416 and cfg.drain_budget == 1_105_920
        assert cfg.max_symbols == 147_456
        assert cfg.link.noise_bandwidth == 1e8
        e = harness.env_config(cfg)
        assert e.batch_size == 12 and e.initial_rate == 2 and e.predictor_enabled
        assert harness.agent_config(cfg).train_episodes == 400

    def test_empty_file_means_defaults(self, tmp_path):
        p = tmp_path / "e.yaml"
        p.write_text("quality_table: " + default_table_abs() + "\n")
        assert load_config(p).to_dict() == load_config().to_dict() | {
            "quality_table": default_table_abs()}

    def test_unknown_key(self, tmp_path):
        p = write_yaml(tmp_path, {"reward": {"lamda_under": 0.1}})
        with pytest.raises(ConfigError, match="reward.lamda_under"):
            load_config(p)

    def test_unknown_top_level(self, tmp_path):
        with pytest.raises(ConfigError, match="colour"):
            load_config(write_yaml(tmp_path, {"colour": 1}))

    def test_inconsistent_qdi(self, tmp_path):
        p = write_yaml(tmp_path, {"quality_table": default_table_abs(),
                                  "queue": {"qdi": 6, "drain_budget": 1105920}})
        with pytest.raises(ConfigError, match="qdi"):
            load_config(p)

    def test_qdi_alone_derives_budget(self, tmp_path):
        p = write_yaml(tmp_path, {"quality_table": default_table_abs(),
                                  "queue": {"qdi": 5, "drain_budget": None}})
        cfg = load_config(p)
        assert cfg.drain_budget == -(-5_308_416 // 5)

    def test_symbol_rate(self, tmp_path):
        p = write_yaml(tmp_path, {"quality_table": default_table_abs(),
                                  "queue": {"symbol_rate": 221184.0, "drain_budget": None}})
        assert load_config(p).drain_budget == 1_105_920

    def test_missing_table(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(write_yaml(tmp_path, {"quality_table": "nope.csv"}))

    def test_wrong_type(self, tmp_path):
        p = write_yaml(tmp_path, {"quality_table": default_table_abs(),
                                  "agent": {"batch_size": "big"}})
        with pytest.raises(ConfigError, match="agent.batch_size"):
            load_config(p)

    def test_parse_error_has_line(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("seed: 1\nreward:\n  lambda_under: [0.1\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(p)

    def test_overrides(self):
        cfg = load_config().with_overrides(**{"reward.lambda_under": 0.5, "seed": 3})
        assert cfg.reward.lambda_under == 0.5 and cfg.seed == 3
        with pytest.raises(ConfigError):
            load_config().with_overrides(**{"reward.nope": 1})


class TestCommands:
    def test_evaluate_outputs(self, tmp_path):
        cfg = load_config()
        reps = harness.cmd_evaluate(cfg, ["min_rate", "mid_rate", "max_rate"], tmp_path)
        assert reps["mid_rate"].qualified == 492
        for name in ("min_rate", "mid_rate", "max_rate"):
            for f in ("report.csv", "step_trace.csv", "queue_log.csv", "frame_trace.csv",
                      "commands.jsonl"):
                assert (tmp_path / name / f).is_file()
        rows = list(csv.reader((tmp_path / "comparison.csv").read_text().splitlines()))
        assert [r[0] for r in rows[1:]] == ["max_rate", "mid_rate", "min_rate"]

    def test_unknown_policy(self, tmp_path):
        with pytest.raises(ConfigError):
            harness.cmd_evaluate(load_config(), ["fastest"], tmp_path)

    def test_train_one_episode_curve(self, tmp_path):
        cfg = load_config().with_overrides(**{**SMALL, "agent.train_episodes": 1})
        res = harness.cmd_train(cfg, tmp_path)
        assert len(res["curve"]) == 1
        assert len((tmp_path / "learning_curve.csv").read_text().splitlines()) == 2

    def test_train_deterministic(self, tmp_path):
        cfg = load_config().with_overrides(**SMALL)
        a = harness.cmd_train(cfg, tmp_path / "a")["checkpoint"]
        b = harness.cmd_train(cfg, tmp_path / "b")["checkpoint"]
        c = harness.cmd_train(cfg.with_overrides(seed=1), tmp_path / "c")["checkpoint"]
        assert harness.sha256_file(a) == harness.sha256_file(b) != harness.sha256_file(c)

    def test_checkpoint_evaluates(self, tmp_path):
        cfg = load_config().with_overrides(**SMALL)
        ckpt = harness.cmd_train(cfg, tmp_path / "t")["checkpoint"]
        reps = harness.cmd_evaluate(cfg, [str(ckpt), "mid_rate"], tmp_path / "e")
        assert set(reps) == {"rl_dqn", "mid_rate"}

    def test_checkpoint_shape_mismatch(self, tmp_path):
        cfg = load_config().with_overrides(**SMALL)
        ckpt = harness.cmd_train(cfg, tmp_path / "t")["checkpoint"]
        narrow = cfg.with_overrides(**{"rates.channels": [32, 96, 192]})
        with pytest.raises(ConfigError, match="shape"):
            harness.cmd_evaluate(narrow, [str(ckpt)], tmp_path / "e")

    def test_sweep(self, tmp_path):
        reps = harness.cmd_sweep(load_config(), "reward.lambda_under", ["0.0", "0.2"],
                                 "mid_rate", tmp_path)
        assert [r.total_return for r in reps.values()] == pytest.approx([492.0, 492 - 49 * 0.2])
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 3 and lines[1].startswith("0.0,492,588,0")

    def test_report_reaggregates(self, tmp_path):
        harness.cmd_evaluate(load_config(), ["mid_rate", "max_rate"], tmp_path)
        reps = harness.cmd_report(tmp_path)
        assert reps["mid_rate"].qualified == 492
        assert (tmp_path / "report.csv").read_text() == (tmp_path / "comparison.csv").read_text()

    def test_ablate_single_arm(self, tmp_path):
        cfg = load_config().with_overrides(**SMALL)
        reps = harness.cmd_ablate(cfg, tmp_path, ["wo_snr_pred"])
        assert set(reps) == {"wo_snr_pred"}
        snap = load_config(tmp_path / "wo_snr_pred" / "config.yaml")
        assert snap.ablation.predictor_enabled is False
        assert (tmp_path / "ablation.csv").is_file()

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
        out = harness.resolve_output(load_config(), "sub/run")
        assert out == tmp_path / "sub" / "run" and out.is_dir()


def csv_files(root: Path):
    return sorted(p.relative_to(root) for p in root.rglob("*")
                  if p.suffix in (".csv", ".jsonl", ".lrqn"))


def test_snapshot_rerun_is_byte_identical(tmp_path):
    cfg = load_config().with_overrides(**SMALL)
    first = tmp_path / "first"
    ckpt = harness.cmd_train(cfg, first / "train")["checkpoint"]
    harness.cmd_evaluate(cfg, [str(ckpt), "max_rate"], first / "eval")

    second = tmp_path / "second"
    snap = load_config(first / "train" / "config.yaml")
    ckpt2 = harness.cmd_train(snap, second / "train")["checkpoint"]
    snap_eval = load_config(first / "eval" / "config.yaml")
    harness.cmd_evaluate(snap_eval, [str(ckpt2), "max_rate"], second / "eval")

    files = csv_files(first)
    assert files == csv_files(second) and len(files) > 10
    for rel in files:
        assert filecmp.cmp(first / rel, second / rel, shallow=False), rel


class TestCli:
    def test_evaluate(self, tmp_path, capsys):
        assert cli.main(["evaluate", "--policy", "mid_rate", "--out", str(tmp_path)]) == 0
        assert "mid_rate" in capsys.readouterr().out

    def test_config_error_exit_code(self, tmp_path, capsys):
        p = write_yaml(tmp_path, {"bogus": 1})
        assert cli.main(["evaluate", "--config", str(p), "--policy", "mid_rate"]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_table_flag(self, tmp_path):
        code = cli.main(["evaluate", "--policy", "mid_rate", "--quality-table",
                         str(tmp_path / "none.csv"), "--out", str(tmp_path)])
        assert code == 2

    def test_latency_exit_code(self, tmp_path):
        p = write_yaml(tmp_path, {"quality_table": default_table_abs(),
                                  "gateway": {"processing_delay": 6.0}})
        assert cli.main(["evaluate", "--config", str(p), "--policy", "mid_rate",
                         "--out", str(tmp_path / "o")]) == 3

    def test_sweep_and_report(self, tmp_path, capsys):
        assert cli.main(["sweep", "--field", "queue.batch_size", "--values", "6,12",
                         "--out", str(tmp_path / "s")]) == 0
        assert cli.main(["evaluate", "--policy", "min_rate", "--out", str(tmp_path / "e")]) == 0
        assert cli.main(["report", str(tmp_path / "e")]) == 0
        assert "min_rate" in capsys.readouterr().out

    def test_module_entry_point(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "leorate", "--help"], capture_output=True,
                           text=True)
        assert r.returncode == 0
        for cmd in ("train", "evaluate", "sweep", "ablate", "report"):
            assert cmd in r.stdout
