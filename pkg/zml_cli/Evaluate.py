"""
Evaluation harness: deterministic episodes of a checkpointed policy on fixed narrow
terrains, aggregated into success-rate and mean-x-displacement tables.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch

from zml_dynamics import Model
from zml_env import Env
from zml_learn import Checkpoint, Trainer
from zml_util import Config, Util

zlog = Util.get_logger(module=__name__)

EVAL_SCHEMA_VERSION = 1
EVAL_FILENAME = "eval.csv"
EPISODE_DIRECTORY = "episodes"
EVAL_COLUMNS = (
    "schema_version",
    "terrain",
    "width",
    "difficulty",
    "episodes",
    "success_rate",
    "success_std",
    "mxd_mean",
    "mxd_std",
)


class EvalResult(object):
    def __init__(self, terrain, width, difficulty, stats):
        self.terrain = terrain
        self.width = float(width)
        self.difficulty = difficulty
        self.stats = list(stats)
        successes = np.array([s.success for s in self.stats], dtype=float)
        displacements = np.array([s.mxd for s in self.stats], dtype=float)
        self.episodes = len(self.stats)
        self.success_rate = float(successes.mean()) if self.episodes else float("nan")
        self.success_std = float(successes.std()) if self.episodes else float("nan")
        self.mxd_mean = float(displacements.mean()) if self.episodes else float("nan")
        self.mxd_std = float(displacements.std()) if self.episodes else float("nan")

    def as_row(self):
        return {
            "schema_version": EVAL_SCHEMA_VERSION,
            "terrain": self.terrain,
            "width": self.width,
            "difficulty": self.difficulty,
            "episodes": self.episodes,
            "success_rate": self.success_rate,
            "success_std": self.success_std,
            "mxd_mean": self.mxd_mean,
            "mxd_std": self.mxd_std,
        }


def evaluation_config(config, checkpoint):
    """
    Copy of `config` whose control selection matches the checkpointed policy.
    """
    evaluation = config.copy()
    evaluation.set("control.control_joints", checkpoint.meta["network"]["control_joints"])
    return evaluation


def run_episode(env, net, seed, dtype=torch.float32):
    """
    Roll out the deterministic policy (action mean) until the episode ends.
    """
    actor_obs, _ = env.reset(seed=seed)
    while True:
        with torch.no_grad():
            action = net.action_mean(torch.as_tensor(actor_obs, dtype=dtype)).numpy()
        actor_obs, _, _, done, info = env.step(action.astype(float))
        if done:
            return info["episode"]


def evaluate(config, net, terrain, width, difficulty, episodes, seed, out_dir=None, dtype=None):
    """
    Run `episodes` evaluation episodes on one (terrain, width, difficulty) setting.
    """
    preset = Config.DIFFICULTY_PRESETS[difficulty]
    model = Model.load_model(config.robot_model_path)
    if dtype is None:
        dtype = next(net.parameters()).dtype
    overrides = {
        "kind": terrain,
        "width": width,
        "gradient": preset["gradient"],
        "step_height": preset["step_height"],
    }
    command = Env.Command(config["evaluation"]["command_speed"], 0.0, 0.0)
    log_dir = None
    if out_dir is not None:
        log_dir = os.path.join(out_dir, EPISODE_DIRECTORY, "{}-{:.2f}".format(terrain, width))
    seeds = Util.derive_seeds(seed, episodes, stream=1)
    level = config["terrain"]["max_level"]

    def one(index):
        env = Env.LocomotionEnv(
            model,
            config,
            seed=seed,
            index=index,
            terrain_overrides=overrides,
            fixed_command=command,
            push_cap=preset["push"],
            episode_log_dir=log_dir,
        )
        env.level = level
        try:
            stats = run_episode(env, net, seeds[index], dtype)
        finally:
            env.close()
        return stats

    workers = Util.get_worker_count(default=os.cpu_count() or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            stats = list(executor.map(one, range(episodes)))
    else:
        stats = [one(index) for index in range(episodes)]
    result = EvalResult(terrain, width, difficulty, stats)
    zlog.info(
        "Evaluated {} width {} ({}): success {:.3f} mxd {:.3f}".format(
            terrain, width, difficulty, result.success_rate, result.mxd_mean
        )
    )
    return result


def write_eval_csv(path, results):
    try:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=EVAL_COLUMNS)
            writer.writeheader()
            for result in results:
                writer.writerow(result.as_row())
    except OSError:
        zlog.error("Error writing evaluation table '{}'".format(path))
        raise
    return path


def cmd_eval(config, checkpoint_path, terrain, widths, difficulty, episodes, seed, out_dir):
    """
    Evaluate a checkpoint on every requested width; writes `eval.csv` and per-episode
    logs under `out_dir`. Raises CheckpointError on a model mismatch.
    """
    Util.ensure_directory(out_dir)
    model = Model.load_model(config.robot_model_path)
    net, checkpoint = Trainer.load_policy(checkpoint_path, model.model_hash())
    config = evaluation_config(config, checkpoint)
    layout_actions = len(model.control_joint_indices(config["control"]["control_joints"]))
    if layout_actions != checkpoint.meta["network"]["n_actions"]:
        raise Checkpoint.CheckpointError(
            "Checkpoint policy has {} actions, configured robot has {}".format(
                checkpoint.meta["network"]["n_actions"], layout_actions
            )
        )
    config.dump(out_dir)

    results = []
    for width in widths:
        result = evaluate(config, net, terrain, width, difficulty, episodes, seed, out_dir)
        results.append(result)
        print(
            "{:14s} width {:.2f} {:6s}  success {:.3f} +- {:.3f}  mxd {:.3f} +- {:.3f}".format(
                terrain,
                width,
                difficulty,
                result.success_rate,
                result.success_std,
                result.mxd_mean,
                result.mxd_std,
            )
        )
    path = write_eval_csv(os.path.join(out_dir, EVAL_FILENAME), results)
    zlog.info("Wrote evaluation table {}".format(path))
    return results
