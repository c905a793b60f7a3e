"""
Training loop: rollout collection on the vectorized environment, PPO updates, terrain
curriculum, metrics CSV and periodic checkpoints with resume.
"""

import csv
import os

import numpy as np
import torch

from zml_dynamics import Model
from zml_env import Env, Rewards
from zml_learn import Checkpoint, Networks, Ppo, Rollout
from zml_terrain import Terrain
from zml_util import Util

zlog = Util.get_logger(module=__name__)
detail_log = Util.get_logger(prefix=Util.DETAIL_LOGGER_PREFIX, module=__name__)

METRICS_FILENAME = "metrics.csv"
CHECKPOINT_DIRECTORY = "checkpoints"
FINAL_CHECKPOINT = "final.ckpt"

LOSS_COLUMNS = (
    "policy_loss",
    "value_loss",
    "symmetry_loss",
    "entropy",
    "kl",
    "clip_fraction",
    "learning_rate",
)
METRICS_COLUMNS = (
    ("iteration",)
    + tuple("reward_" + name for name in Rewards.REWARD_NAMES)
    + ("mean_episode_length", "mean_level", "success_rate", "episodes")
    + LOSS_COLUMNS
)


class Curriculum(object):
    """
    Per-environment terrain level. An episode whose forward progress reaches
    `promote_ratio` of the commanded distance moves its environment one level up;
    below `demote_ratio` it moves one level down. Episodes with less commanded
    distance than `min_command_distance` leave the level unchanged.
    """

    def __init__(
        self,
        num_envs,
        initial_level=0,
        max_level=Terrain.MAX_LEVEL,
        enabled=True,
        promote_ratio=0.8,
        demote_ratio=0.4,
        min_command_distance=0.5,
    ):
        self.levels = np.full(num_envs, int(initial_level), dtype=int)
        self.max_level = int(max_level)
        self.enabled = enabled
        self.promote_ratio = promote_ratio
        self.demote_ratio = demote_ratio
        self.min_command_distance = min_command_distance

    @classmethod
    def from_config(cls, num_envs, terrain, settings):
        return cls(
            num_envs,
            terrain["initial_level"],
            terrain["max_level"],
            settings["enabled"],
            settings["promote_ratio"],
            settings["demote_ratio"],
            settings["min_command_distance"],
        )

    def update(self, index, stats):
        level = self.levels[index]
        if not self.enabled or stats.commanded_distance < self.min_command_distance:
            return int(level)
        progress = stats.mxd / stats.commanded_distance
        if progress >= self.promote_ratio:
            level = min(level + 1, self.max_level)
        elif progress < self.demote_ratio:
            level = max(level - 1, 0)
        self.levels[index] = level
        return int(level)

    @property
    def mean_level(self):
        return float(np.mean(self.levels))

    def state(self):
        return {"levels": self.levels.tolist()}

    def load_state(self, state):
        levels = np.asarray(state["levels"], dtype=int)
        if levels.shape != self.levels.shape:
            raise Checkpoint.CheckpointError(
                "Checkpoint holds {} curriculum levels, run has {} environments".format(
                    len(levels), len(self.levels)
                )
            )
        self.levels = np.clip(levels, 0, self.max_level)


class Trainer(object):
    def __init__(self, config, out_dir, resume=None):
        self.config = config
        self.out_dir = out_dir
        self.train_config = Ppo.TrainConfig.from_config(config["train"])
        self.seed = int(config["seed"])
        Util.set_global_seed(self.seed)

        self.model = Model.load_model(config.robot_model_path)
        self.model_hash = self.model.model_hash()
        tc = self.train_config
        self.dtype = tc.torch_dtype
        self.n_heads = len(Rewards.REWARD_NAMES) if tc.vectorized else 1

        self.curriculum = Curriculum.from_config(tc.num_envs, config["terrain"], tc.curriculum)
        self.vec_env = Env.VecEnv(
            self.model, config, tc.num_envs, seed=self.seed, curriculum=self.curriculum
        )
        self.layout = self.vec_env.layout
        self.net = Networks.build_actor_critic(self.layout, self.n_heads, tc, self.dtype)
        self.optimizer = torch.optim.Adam(self.net.parameters(), lr=tc.learning_rate)
        self.maps = Networks.MirrorMaps.from_layout(self.layout, self.dtype)
        self.generator = torch.Generator().manual_seed(self.seed)
        self.buffer = Rollout.RolloutBuffer(
            tc.horizon,
            tc.num_envs,
            self.layout.actor_dim,
            self.layout.critic_dim,
            self.layout.n_actions,
            self.n_heads,
        )
        self.iteration = 0
        if resume is not None:
            self.load(resume)

    def network_meta(self):
        tc = self.train_config
        return {
            "actor_dim": self.layout.actor_dim,
            "critic_dim": self.layout.critic_dim,
            "n_actions": self.layout.n_actions,
            "n_heads": self.n_heads,
            "actor_hidden": list(tc.actor_hidden),
            "critic_hidden": list(tc.critic_hidden),
            "init_noise_std": tc.init_noise_std,
            "control_joints": self.config["control"]["control_joints"],
            "dtype": tc.dtype,
        }

    def checkpoint(self):
        meta = {
            "network": self.network_meta(),
            "curriculum": self.curriculum.state(),
            "env_rng": [env.rng.bit_generator.state for env in self.vec_env.envs],
            "config": self.config.data,
        }
        return Checkpoint.capture(
            self.net,
            self.model_hash,
            self.iteration,
            meta,
            optimizer=self.optimizer,
            generator=self.generator,
        )

    def save(self, name=None):
        if name is None:
            name = "iteration-{:06d}.ckpt".format(self.iteration)
        path = os.path.join(self.out_dir, CHECKPOINT_DIRECTORY, name)
        return Checkpoint.save_checkpoint(path, self.checkpoint())

    def load(self, path):
        checkpoint = Checkpoint.load_checkpoint(path, self.model_hash)
        if checkpoint.meta["network"] != self.network_meta():
            raise Checkpoint.CheckpointError(
                "Checkpoint network {} does not match the configured network".format(
                    checkpoint.meta["network"]
                )
            )
        Checkpoint.restore_network(self.net, checkpoint)
        Checkpoint.restore_optimizer(self.optimizer, checkpoint)
        Checkpoint.restore_generator(self.generator, checkpoint)
        self.curriculum.load_state(checkpoint.meta["curriculum"])
        for env, state in zip(self.vec_env.envs, checkpoint.meta["env_rng"]):
            env.rng.bit_generator.state = state
        self.iteration = checkpoint.iteration
        zlog.info("Resumed from {} at iteration {}".format(path, self.iteration))

    def _tensor(self, array):
        return torch.as_tensor(array, dtype=self.dtype)

    def collect(self, actor_obs, critic_obs):
        """
        Fill the buffer with one horizon of transitions. Returns the latest
        observations, the raw per-term reward sums and the finished episodes.
        """
        tc = self.train_config
        self.buffer.clear()
        term_sums = np.zeros(len(Rewards.REWARD_NAMES))
        episodes = []
        for _ in range(tc.horizon):
            with torch.no_grad():
                actor_t, critic_t = self._tensor(actor_obs), self._tensor(critic_obs)
                self.net.update_normalization(actor_t, critic_t)
                actions, log_probs, means, stds = self.net.act(actor_t, self.generator)
                values = self.net.value_heads(critic_t).numpy().astype(float)
            actions_np = actions.numpy().astype(float)
            next_actor, next_critic, rewards, dones, infos = self.vec_env.step(actions_np)
            term_sums += rewards.sum(axis=0)

            stored = rewards if self.n_heads > 1 else rewards.sum(axis=1, keepdims=True)
            time_outs = np.array([info["time_out"] for info in infos], dtype=float)
            stored = stored + tc.gamma * values * time_outs[:, None]
            self.buffer.add(
                actor_obs,
                critic_obs,
                actions_np,
                log_probs.numpy(),
                means.numpy(),
                stds.numpy(),
                stored,
                values,
                dones,
            )
            episodes.extend(info["episode"] for info in infos if "episode" in info)
            actor_obs, critic_obs = next_actor, next_critic

        with torch.no_grad():
            self.buffer.last_values = (
                self.net.value_heads(self._tensor(critic_obs)).numpy().astype(float)
            )
        return actor_obs, critic_obs, term_sums, episodes

    def metrics_row(self, term_sums, episodes, stats):
        tc = self.train_config
        transitions = float(tc.horizon * tc.num_envs)
        row = {"iteration": self.iteration}
        for name, value in zip(Rewards.REWARD_NAMES, term_sums / transitions):
            row["reward_" + name] = value
        if episodes:
            row["mean_episode_length"] = float(np.mean([e.length for e in episodes]))
            row["success_rate"] = float(np.mean([e.success for e in episodes]))
        else:
            row["mean_episode_length"] = float("nan")
            row["success_rate"] = float("nan")
        row["episodes"] = len(episodes)
        row["mean_level"] = self.curriculum.mean_level
        row.update({name: stats[name] for name in LOSS_COLUMNS})
        return row

    def run(self, iterations=None):
        """
        Train until `iterations` total iterations; returns the final checkpoint path.
        """
        tc = self.train_config
        total = tc.iterations if iterations is None else iterations
        Util.ensure_directory(self.out_dir)
        metrics_path = os.path.join(self.out_dir, METRICS_FILENAME)
        resuming = self.iteration > 0 and os.path.exists(metrics_path)

        actor_obs, critic_obs = self.vec_env.reset()
        with open(metrics_path, "a" if resuming else "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=METRICS_COLUMNS)
            if not resuming:
                writer.writeheader()
            while self.iteration < total:
                actor_obs, critic_obs, term_sums, episodes = self.collect(actor_obs, critic_obs)
                Rollout.value_targets(self.buffer, tc.gamma, tc.lam)
                stats = Ppo.ppo_update(
                    self.buffer, self.net, self.optimizer, tc, self.maps, self.generator
                )
                self.iteration += 1
                row = self.metrics_row(term_sums, episodes, stats)
                writer.writerow(row)
                f.flush()
                print(
                    "iteration {:5d}  tracking {:.4f}  zmp {:.4f}  level {:.2f}  "
                    "value loss {:.4f}  kl {:.4f}".format(
                        self.iteration,
                        row["reward_lin_vel_tracking"],
                        row["reward_zmp"],
                        row["mean_level"],
                        row["value_loss"],
                        row["kl"],
                    )
                )
                detail_log.info("iteration {}: {}".format(self.iteration, row))
                if self.iteration % tc.checkpoint_interval == 0:
                    self.save()

        return self.save(FINAL_CHECKPOINT)

    def close(self):
        self.vec_env.close()


def train(config, out_dir, resume=None, iterations=None):
    """
    Train a policy for `config`, writing metrics and checkpoints under `out_dir`.
    """
    trainer = Trainer(config, out_dir, resume)
    try:
        return trainer.run(iterations)
    finally:
        trainer.close()


def load_policy(path, model_hash=None):
    """
    Rebuild the actor-critic stored in a checkpoint, normalizers frozen, eval mode.
    """
    checkpoint = Checkpoint.load_checkpoint(path, model_hash)
    network = checkpoint.meta["network"]
    net = Networks.ActorCritic(
        network["actor_dim"],
        network["critic_dim"],
        network["n_actions"],
        network["n_heads"],
        tuple(network["actor_hidden"]),
        tuple(network["critic_hidden"]),
        network["init_noise_std"],
    ).to(Ppo.TORCH_DTYPES[network["dtype"]])
    Checkpoint.restore_network(net, checkpoint)
    net.freeze_normalization()
    net.eval()
    return net, checkpoint
