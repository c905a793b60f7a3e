import csv
import math
import os
from tempfile import TemporaryDirectory
from unittest import mock

import numpy as np
import pytest

from zml_cli import Analyze, Cli, Evaluate
from zml_env import EpisodeLog, Env
from zml_learn import Checkpoint, Trainer
from zml_util import Config

BIPED_MODEL_PATH = os.path.join(Config.CONFIG_DIRECTORY, "robot-biped10.yml")

OTHER_HASH = "cd" * 32


def test_parse_argv():
    args = Cli.parse_argv(
        [
            "eval",
            "--checkpoint",
            "final.ckpt",
            "--widths",
            "0.3",
            "0.5",
            "--difficulty",
            "hard",
            "--set",
            "seed=4",
            "--set",
            "train.num_envs=8",
        ]
    )
    assert args.command == "eval"
    assert args.widths == [0.3, 0.5]
    assert args.difficulty == "hard"
    assert args.overrides == ["seed=4", "train.num_envs=8"]


@pytest.mark.parametrize(
    "argv", [["fly"], ["eval", "--terrain", "mixed"], ["eval", "--difficulty", "extreme"]]
)
def test_parse_argv_rejects_bad_choices(argv):
    with pytest.raises(SystemExit):
        Cli.parse_argv(argv)


@mock.patch("zml_cli.Cli.zlog.error")
def test_missing_config_file(mocked_error):
    with TemporaryDirectory() as tmpdir:
        code = Cli.main(["train", "--config", "/nonexistent/run.yml", "--out", tmpdir])
    assert code == Cli.EXIT_CONFIG
    assert "Config file does not exist" in mocked_error.call_args[0][0]


@pytest.mark.parametrize(
    "argv,message",
    [
        (["eval"], "eval requires --checkpoint"),
        (["analyze-zmp"], "analyze-zmp requires --episode-log"),
        (["train", "--set", "train.gamma=2.0"], "train.gamma must lie in"),
    ],
)
@mock.patch("zml_cli.Cli.zlog.error")
def test_usage_errors(mocked_error, argv, message):
    with TemporaryDirectory() as tmpdir:
        assert Cli.main(argv + ["--out", tmpdir]) == Cli.EXIT_CONFIG
    assert message in mocked_error.call_args[0][0]


@mock.patch("zml_cli.Cli.zlog.error")
def test_runtime_errors_exit_with_one(mocked_error):
    with TemporaryDirectory() as tmpdir:
        with mock.patch("zml_cli.Cli.cmd_train", side_effect=Checkpoint.CheckpointError("bad")):
            assert Cli.main(["train", "--out", tmpdir]) == Cli.EXIT_RUNTIME
    mocked_error.assert_called_with("bad")


def test_seed_flag_overrides_the_config():
    with TemporaryDirectory() as tmpdir:
        with mock.patch("zml_cli.Cli.cmd_train") as mocked_train:
            assert Cli.main(["train", "--seed", "9", "--out", tmpdir, "--iterations", "2"]) == 0
    config, out_dir = mocked_train.call_args[0]
    assert config["seed"] == 9
    assert out_dir == tmpdir
    assert mocked_train.call_args[1] == {"resume": None, "iterations": 2}


def test_apply_variant():
    config = Config.load_run_config()
    assert Cli.apply_variant(config, "no_zmp")["rewards"]["weights"]["zmp"] == 0.0
    assert Cli.apply_variant(config, "no_vectorization")["train"]["vectorized"] is False
    assert Cli.apply_variant(config, "no_upper")["control"]["control_joints"] == "lower"
    assert Cli.apply_variant(config, "action_noise=0.1")["randomization"]["action_noise"] == 0.1
    baseline = Cli.apply_variant(config, "baseline")
    assert baseline.data == config.data
    # The original config is untouched
    assert config["rewards"]["weights"]["zmp"] != 0.0


@pytest.mark.parametrize(
    "variant,message",
    [
        ("no_legs", "Unknown ablation variant"),
        ("action_noise", "Unknown ablation variant"),
        ("no_zmp=1", "Unknown ablation variant"),
        ("action_noise=lots", "must be a number"),
        ("action_noise=-0.1", "must be non-negative"),
    ],
)
def test_apply_variant_errors(variant, message):
    with pytest.raises(Config.ValidationError, match=message):
        Cli.apply_variant(Config.load_run_config(), variant)


def test_ablate_always_trains_the_baseline():
    config = Config.load_run_config(overrides=["ablation.seeds=[3]"])
    result = Evaluate.EvalResult("narrow_flat", 0.3, "easy", [])
    with TemporaryDirectory() as tmpdir:
        with mock.patch("zml_cli.Cli.cmd_train", return_value="final.ckpt") as mocked_train:
            with mock.patch("zml_cli.Evaluate.cmd_eval", return_value=[result]):
                rows = Cli.cmd_ablate(config, ["no_zmp"], tmpdir, 2)
        with open(os.path.join(tmpdir, Cli.ABLATION_FILENAME)) as f:
            table = list(csv.DictReader(f))
    assert [row["variant"] for row in rows] == ["baseline", "no_zmp"]
    assert [row["seed"] for row in table] == ["3", "3"]
    trained = [call[0][0] for call in mocked_train.call_args_list]
    assert trained[0]["rewards"]["weights"]["zmp"] != 0.0
    assert trained[1]["rewards"]["weights"]["zmp"] == 0.0
    assert all(c["seed"] == 3 for c in trained)


def _write_episode_log(path, distances):
    with EpisodeLog.EpisodeLogWriter(path, {"seed": 0}) as writer:
        for k, distance in enumerate(distances):
            row = {column: 0.0 for column in EpisodeLog.COLUMNS}
            row.update(time=0.02 * (k + 1), zmp_distance=distance, contact_left=True)
            writer.write_step(row)


def test_analyze_zmp():
    with TemporaryDirectory() as tmpdir:
        log_path = os.path.join(tmpdir, "episode.csv")
        _write_episode_log(log_path, [0.01, 0.03, float("nan"), 0.09])
        out_dir = os.path.join(tmpdir, "analysis")
        assert Cli.main(["analyze-zmp", "--episode-log", log_path, "--out", out_dir]) == 0
        with open(os.path.join(out_dir, Analyze.SUMMARY_FILENAME)) as f:
            (summary,) = list(csv.DictReader(f))
        with open(os.path.join(out_dir, Analyze.TRACE_FILENAME)) as f:
            trace = list(csv.DictReader(f))
    assert int(summary["steps"]) == 4
    assert float(summary["max_distance"]) == pytest.approx(0.09)
    assert float(summary["mean_distance"]) == pytest.approx(0.13 / 3)
    # The flight step counts as unstable
    assert float(summary["fraction_below"]) == pytest.approx(0.5)
    assert len(trace) == 4
    assert list(trace[0]) == list(Analyze.TRACE_COLUMNS)


def test_analyze_an_empty_log():
    with TemporaryDirectory() as tmpdir:
        log_path = os.path.join(tmpdir, "episode.csv")
        _write_episode_log(log_path, [])
        assert Cli.main(["analyze-zmp", "--episode-log", log_path, "--out", tmpdir]) == 0
        with open(os.path.join(tmpdir, Analyze.SUMMARY_FILENAME)) as f:
            (summary,) = list(csv.DictReader(f))
    assert summary["steps"] == "0"
    assert math.isnan(float(summary["max_distance"]))


@mock.patch("zml_cli.Cli.zlog.error")
def test_analyze_a_malformed_log(mocked_error):
    with TemporaryDirectory() as tmpdir:
        log_path = os.path.join(tmpdir, "episode.csv")
        _write_episode_log(log_path, [0.01])
        with open(log_path, "a") as f:
            f.write("1,2\n")
        assert Cli.main(["analyze-zmp", "--episode-log", log_path, "--out", tmpdir]) == 1
    assert mocked_error.call_args[0][0].startswith("line 5:")


def test_summarize_without_support():
    trace = [{"time": 0.02 * k, "zmp_distance": float("nan")} for k in range(3)]
    summary = Analyze.summarize(trace)
    assert summary["steps"] == 3
    assert math.isnan(summary["mean_distance"])
    assert math.isnan(summary["early_max"]) and math.isnan(summary["late_max"])
    assert summary["fraction_below"] == 0.0


def test_summarize_shows_a_distance_growing_before_a_fall():
    # Steady support for 1.5 s, then the ZMP drifts out until the feet leave the ground
    times = 0.02 * np.arange(1, 101)
    distances = np.where(times <= 1.5, 0.02, 0.02 + 0.4 * (times - 1.5))
    distances[-1] = float("nan")
    trace = [{"time": t, "zmp_distance": d} for t, d in zip(times, distances)]
    summary = Analyze.summarize(trace)
    assert summary["early_max"] == pytest.approx(0.02)
    assert summary["late_max"] == pytest.approx(0.02 + 0.4 * 0.48)
    assert summary["late_max"] > summary["early_max"]


@mock.patch("zml_cli.Cli.zlog.error")
def test_eval_refuses_a_checkpoint_of_another_model(mocked_error):
    with TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, "other.ckpt")
        Checkpoint.save_checkpoint(path, Checkpoint.PolicyCheckpoint(OTHER_HASH))
        argv = [
            "eval",
            "--checkpoint",
            path,
            "--set",
            "robot_model={}".format(BIPED_MODEL_PATH),
            "--out",
            tmpdir,
        ]
        assert Cli.main(argv) == Cli.EXIT_RUNTIME
    assert "was trained on model cdcdcdcdcdcd" in mocked_error.call_args[0][0]


def test_eval_result_aggregates():
    episodes = [
        Env.EpisodeStats(True, 4.5, 20.0, {}, []),
        Env.EpisodeStats(False, 1.0, 8.0, {}, []),
    ]
    result = Evaluate.EvalResult("narrow_flat", 0.3, "medium", episodes)
    row = result.as_row()
    assert row["schema_version"] == Evaluate.EVAL_SCHEMA_VERSION
    assert row["episodes"] == 2
    assert row["success_rate"] == 0.5 and row["success_std"] == 0.5
    assert row["mxd_mean"] == pytest.approx(2.75)
    assert row["mxd_std"] == pytest.approx(1.75)
    empty = Evaluate.EvalResult("narrow_flat", 0.3, "medium", [])
    assert empty.episodes == 0 and math.isnan(empty.success_rate)


def test_write_eval_csv():
    results = [
        Evaluate.EvalResult("narrow_slope", w, "easy", [Env.EpisodeStats(True, 4.2, 20.0, {}, [])])
        for w in (0.3, 0.6)
    ]
    with TemporaryDirectory() as tmpdir:
        path = Evaluate.write_eval_csv(os.path.join(tmpdir, Evaluate.EVAL_FILENAME), results)
        with open(path) as f:
            reader = csv.DictReader(f)
            assert tuple(reader.fieldnames) == Evaluate.EVAL_COLUMNS
            rows = list(reader)
    assert [float(row["width"]) for row in rows] == [0.3, 0.6]
    assert all(row["success_rate"] == "1.0" for row in rows)


@pytest.mark.slow
def test_train_then_evaluate():
    config = Config.load_run_config(
        os.path.join(Config.CONFIG_DIRECTORY, "smoke.yml"),
        ["train.num_envs=4", "train.horizon=8", "simulation.episode_length=2.0"],
    )
    with TemporaryDirectory() as tmpdir:
        checkpoint = Cli.cmd_train(config, tmpdir, iterations=2)
        assert os.path.isfile(checkpoint)
        with open(os.path.join(tmpdir, Trainer.METRICS_FILENAME)) as f:
            metrics = list(csv.DictReader(f))
        assert [row["iteration"] for row in metrics] == ["1", "2"]
        assert all(np.isfinite(float(row["value_loss"])) for row in metrics)

        results = Evaluate.cmd_eval(
            config, checkpoint, "narrow_flat", [0.4], "easy", 2, 0, os.path.join(tmpdir, "eval")
        )
        assert results[0].episodes == 2
        assert os.path.isfile(os.path.join(tmpdir, "eval", Evaluate.EVAL_FILENAME))

        # Resuming continues the iteration count and appends to the metrics
        resumed = Trainer.Trainer(config, tmpdir, resume=checkpoint)
        try:
            assert resumed.iteration == 2
            resumed.run(3)
        finally:
            resumed.close()
        with open(os.path.join(tmpdir, Trainer.METRICS_FILENAME)) as f:
            assert len(list(csv.DictReader(f))) == 3
