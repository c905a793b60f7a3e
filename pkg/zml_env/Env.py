"""
Goal-conditioned locomotion environment: commands, observations, reward vector,
randomization, pushes, action noise, termination and episode metrics.
"""

import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from enum import Enum

import numpy as np

from zml_dynamics import Dynamics
from zml_env import EpisodeLog, Observations, Randomization, Rewards
from zml_terrain import Terrain
from zml_util import Util

zlog = Util.get_logger(module=__name__)
detail_log = Util.get_logger(prefix=Util.DETAIL_LOGGER_PREFIX, module=__name__)

LIN_VEL_X_RANGE = (-0.5, 1.0)
LIN_VEL_Y_RANGE = (-0.2, 0.2)
YAW_RATE_LIMIT = 1.0
HEADING_GAIN = 0.5
SUCCESS_DISTANCE = 4.0
# Path beyond the farthest commanded distance
PATH_MARGIN = 1.0


class TerminationReason(Enum):
    NONE = "none"
    FALL = "fall"
    TILT = "tilt"
    OFF_PATH = "off_path"
    TIMEOUT = "timeout"
    DIVERGENCE = "divergence"


class Command(object):
    def __init__(self, lin_vel_x=0.0, lin_vel_y=0.0, yaw_rate=0.0):
        self.lin_vel_x = float(lin_vel_x)
        self.lin_vel_y = float(lin_vel_y)
        self.yaw_rate = float(yaw_rate)

    def as_array(self):
        return np.array([self.lin_vel_x, self.lin_vel_y, self.yaw_rate])

    def mirrored(self):
        return Command(self.lin_vel_x, -self.lin_vel_y, -self.yaw_rate)

    def __repr__(self):
        return "Command(vx={:.3f}, vy={:.3f}, yaw={:.3f})".format(
            self.lin_vel_x, self.lin_vel_y, self.yaw_rate
        )


def mirror_command(command):
    return command.mirrored()


def wrap_angle(angle):
    return float((angle + np.pi) % (2.0 * np.pi) - np.pi)


def heading_command(delta_yaw, gain=HEADING_GAIN, limit=YAW_RATE_LIMIT):
    """
    Yaw-rate command steering the heading back to world +x.
    """
    return float(np.clip(gain * delta_yaw, -limit, limit))


def heading_error(state):
    """
    Signed angle from the robot's heading to the world +x axis.
    """
    return wrap_angle(-Dynamics.yaw_from_quat(state.base_quat))


def sample_command(state, rng, settings=None):
    if settings is None:
        settings = {
            "lin_vel_x": LIN_VEL_X_RANGE,
            "lin_vel_y": LIN_VEL_Y_RANGE,
            "heading_gain": HEADING_GAIN,
            "yaw_limit": YAW_RATE_LIMIT,
        }
    lin_vel_x = rng.uniform(*settings["lin_vel_x"])
    lin_vel_y = rng.uniform(*settings["lin_vel_y"])
    yaw_rate = heading_command(
        heading_error(state), settings["heading_gain"], settings["yaw_limit"]
    )
    return Command(lin_vel_x, lin_vel_y, yaw_rate)


def required_path_length(commands, episode_length, fixed_command=None, margin=PATH_MARGIN):
    """
    Path length covering the farthest forward distance any command asks for in one
    episode, plus a margin.
    """
    speed = commands["lin_vel_x"][1]
    if fixed_command is not None:
        speed = max(speed, fixed_command.lin_vel_x)
    return max(speed, 0.0) * episode_length + margin


def check_termination(
    state,
    terrain,
    time,
    nominal_height,
    episode_length=20.0,
    min_height_ratio=0.5,
    max_tilt=0.8,
):
    """
    Past the far end of a narrow path the ground drops away, so an overshoot ends as
    off path once the base sinks.
    """
    x, y, z = state.base_pos
    height = z - Terrain.path_elevation(terrain, x)
    if height < min_height_ratio * nominal_height:
        _, on_path = Terrain.height_at(terrain, x, y)
        return True, TerminationReason.FALL if on_path else TerminationReason.OFF_PATH
    gravity = Dynamics.projected_gravity(state.base_quat)
    if np.linalg.norm(gravity[:2]) > max_tilt:
        return True, TerminationReason.TILT
    if time >= episode_length - 1e-9:
        return True, TerminationReason.TIMEOUT
    return False, TerminationReason.NONE


class EpisodeStats(object):
    def __init__(
        self,
        success,
        mxd,
        length,
        reward_sums,
        zmp_distances,
        reason=TerminationReason.NONE,
        level=0,
        commanded_distance=0.0,
        terrain_kind=None,
    ):
        self.success = bool(success)
        self.mxd = float(mxd)
        self.length = float(length)
        self.reward_sums = reward_sums
        self.zmp_distances = np.asarray(zmp_distances, dtype=float)
        self.reason = reason
        self.level = level
        self.commanded_distance = float(commanded_distance)
        self.terrain_kind = terrain_kind


class Trajectory(object):
    """
    Running record of one episode, reduced by `episode_metrics`.
    """

    def __init__(self, start_x, n_rewards, level=0, terrain_kind=None):
        self.start_x = float(start_x)
        self.final_x = float(start_x)
        self.length = 0.0
        self.reward_sums = np.zeros(n_rewards)
        self.zmp_distances = []
        self.commanded_distance = 0.0
        self.reason = TerminationReason.NONE
        self.level = level
        self.terrain_kind = terrain_kind

    def record(self, x, dt, rewards, zmp_distance, command):
        self.final_x = float(x)
        self.length += dt
        self.reward_sums += rewards
        self.zmp_distances.append(zmp_distance)
        self.commanded_distance += max(command.lin_vel_x, 0.0) * dt


def episode_metrics(trajectory, success_distance=SUCCESS_DISTANCE):
    displacement = trajectory.final_x - trajectory.start_x
    return EpisodeStats(
        success=displacement >= success_distance,
        mxd=max(displacement, 0.0),
        length=trajectory.length,
        reward_sums=dict(zip(Rewards.REWARD_NAMES, np.asarray(trajectory.reward_sums).tolist())),
        zmp_distances=trajectory.zmp_distances,
        reason=trajectory.reason,
        level=trajectory.level,
        commanded_distance=trajectory.commanded_distance,
        terrain_kind=trajectory.terrain_kind,
    )


class LocomotionEnv(object):
    """
    One simulated robot on one terrain. Owned by a single worker at a time.

    `terrain_overrides` fixes terrain parameters (kind, width, gradient, step_height,
    descending) and `fixed_command` replaces command sampling, as evaluation requires.
    `push_cap` bounds push velocities below the configured magnitude.
    """

    def __init__(
        self,
        model,
        config,
        seed=0,
        index=0,
        terrain_overrides=None,
        fixed_command=None,
        push_cap=None,
        episode_log_dir=None,
    ):
        self.base_model = model
        self.config = config
        self.seed = int(seed)
        self.index = int(index)
        self.terrain_overrides = dict(terrain_overrides or {})
        self.fixed_command = fixed_command
        self.push_cap = push_cap
        self.episode_log_dir = episode_log_dir

        simulation = config["simulation"]
        control = config["control"]
        self.physics_dt = simulation["physics_dt"]
        self.decimation = simulation["decimation"]
        self.control_dt = self.physics_dt * self.decimation
        self.episode_length = simulation["episode_length"]
        self.action_scale = control["action_scale"]
        self.clip_actions = control["clip_actions"]

        self.control_joints = model.control_joint_indices(control["control_joints"])
        self.layout = Observations.ObservationLayout(
            model, self.control_joints, control["history_length"], control["privileged_dim"]
        )
        self.weights = Rewards.weight_vector(config["rewards"]["weights"])
        self.reward_params = dict(config["rewards"])
        self.reward_params.update(config["balance"])
        self.nominal_height = Dynamics.nominal_base_height(model)
        self.path_length = max(
            config["terrain"]["path_length"],
            required_path_length(config["commands"], self.episode_length, fixed_command),
        )

        self.rng = Util.make_rng(self.seed, self.index)
        self.level = config["terrain"]["initial_level"]
        self.episode_count = 0
        self.state = None
        self._log = None

    @property
    def n_actions(self):
        return self.layout.n_actions

    @property
    def n_rewards(self):
        return len(self.weights)

    def _terrain_kind(self):
        kind = self.terrain_overrides.get("kind", self.config["terrain"]["kind"])
        if kind == "mixed":
            return Terrain.mix_terrains(self.rng)
        return Terrain.parse_kind(kind)

    def reset(self, level=None, seed=None):
        if seed is not None:
            self.rng = Util.make_rng(seed, self.index)
        if level is not None:
            self.level = int(level)
        terrain_config = self.config["terrain"]

        overrides = {
            "path_length": self.path_length,
            "friction": terrain_config["friction"],
        }
        for key in ("width", "gradient", "step_height", "descending"):
            if key in self.terrain_overrides:
                overrides[key] = self.terrain_overrides[key]
        self.terrain_spec, self.terrain = Terrain.generate_terrain(
            self._terrain_kind(), self.level, self.rng, **overrides
        )

        settings = self.config["randomization"]
        self.draw = Randomization.draw_randomization(self.base_model, settings, self.rng)
        self.model = self.draw.apply(self.base_model)
        self.sim_params = Dynamics.SimParams.from_config(
            self.config["simulation"], friction=self.draw.friction
        )
        self.push_enabled = settings["enabled"] and settings["push"]["enabled"]
        self.push_lin_vel = settings["push"]["lin_vel"]
        self.push_ang_vel = settings["push"]["ang_vel"]
        if self.push_cap is not None:
            self.push_lin_vel = min(self.push_lin_vel, self.push_cap)
        self.rfi_magnitude = settings["torque_rfi"]["magnitude"]
        delay_steps = int(round(self.draw.action_delay / self.physics_dt))
        self.delay_steps = min(delay_steps, self.decimation)

        spawn_height = self.nominal_height + Terrain.path_elevation(self.terrain, 0.0)
        self.state = Dynamics.SimState.at_rest(self.model, base_pos=(0.0, 0.0, spawn_height))
        self.command = self._new_command()
        self.next_resample = self.config["commands"]["resample_interval"]
        self.next_push_time = self._schedule_push(0.0)

        self.prev_target = np.array(self.base_model.default_q)
        self.last_action = np.zeros(self.n_actions)
        self.gait = Rewards.GaitTracker(self.n_actions)
        self.gait.push_action(self.last_action, self.state.base_lin_vel)
        self.trajectory = Trajectory(
            0.0, self.n_rewards, level=self.level, terrain_kind=self.terrain_spec.kind.value
        )
        self.contacts = Dynamics.evaluate_contacts(
            self.model, self.state, self.terrain, self.sim_params
        )

        frame = self._frame()
        self.history = deque([frame] * self.layout.history, maxlen=self.layout.history)
        self._open_log(seed)
        self.episode_count += 1
        detail_log.info(
            "env {} reset: level {} terrain {}".format(self.index, self.level, self.terrain_spec)
        )
        return self._observations()

    def _new_command(self):
        if self.fixed_command is not None:
            return Command(
                self.fixed_command.lin_vel_x, self.fixed_command.lin_vel_y, self._yaw_command()
            )
        return sample_command(self.state, self.rng, self.config["commands"])

    def _yaw_command(self):
        commands = self.config["commands"]
        return heading_command(
            heading_error(self.state), commands["heading_gain"], commands["yaw_limit"]
        )

    def _schedule_push(self, now):
        if not self.push_enabled:
            return np.inf
        mean = self.config["randomization"]["push"]["mean_interval"]
        return now + Randomization.sample_push_interval(self.rng, mean)

    def _frame(self):
        state = self.state
        return self.layout.actor_frame(
            state.q - self.base_model.default_q,
            state.qd,
            Dynamics.to_base_frame(state.base_quat, state.base_ang_vel),
            Dynamics.projected_gravity(state.base_quat),
            self.last_action,
        )

    def _observations(self):
        actor = np.concatenate([self.command.as_array()] + list(self.history))
        state = self.state
        height = state.base_pos[2] - Terrain.path_elevation(self.terrain, state.base_pos[0])
        privileged = self.layout.privileged(
            Dynamics.to_base_frame(state.base_quat, state.base_lin_vel),
            height,
            self.contacts.foot_contact(self.config["balance"]["contact_threshold"]),
            self.draw.kp_scale,
            self.draw.kd_scale,
            self.draw.link_mass_scale,
        )
        window = Terrain.sample_height_window(
            self.terrain, state.base_pos, Dynamics.yaw_from_quat(state.base_quat)
        )
        critic = np.concatenate([actor, privileged, window])
        return actor, critic

    def apply_push(self, lin_delta, ang_delta):
        self.state = Dynamics.apply_base_velocity_delta(self.state, lin_delta, ang_delta)

    def step(self, action):
        action = np.clip(np.asarray(action, dtype=float), -self.clip_actions, self.clip_actions)
        if action.shape != (self.n_actions,) or not np.all(np.isfinite(action)):
            raise ValueError("Action must be {} finite values".format(self.n_actions))
        noisy = Randomization.apply_action_noise(action, self.draw.action_noise, self.rng)
        target = np.array(self.base_model.default_q)
        target[self.control_joints] += self.action_scale * noisy

        info = {}
        torques = np.zeros(self.model.n_dof)
        diverged = False
        for substep in range(self.decimation):
            active_target = self.prev_target if substep < self.delay_steps else target
            torques = Dynamics.pd_torques(self.model, self.state, active_target)
            if self.draw.rfi_scale > 0.0:
                torques = torques + Randomization.rfi_torques(
                    self.model.torque_limit, self.draw.rfi_scale, self.rfi_magnitude, self.rng
                )
                torques = np.clip(torques, -self.model.torque_limit, self.model.torque_limit)
            try:
                self.state, self.contacts = Dynamics.step(
                    self.model,
                    self.state,
                    torques,
                    self.terrain,
                    self.physics_dt,
                    self.sim_params,
                    joint_gains=Dynamics.pd_gains(self.model, torques),
                )
            except Dynamics.NumericalDivergence as e:
                zlog.warning("env {}: {}".format(self.index, e))
                diverged = True
                break
        self.prev_target = target
        self.last_action = action

        if diverged:
            return self._finish_diverged(info)

        if self.state.time >= self.next_push_time - 1e-9:
            lin, ang = Randomization.draw_push(self.rng, self.push_lin_vel, self.push_ang_vel)
            before = self.state.base_lin_vel.copy()
            self.apply_push(lin, ang)
            info["push"] = {"lin": lin, "ang": ang, "before": before}
            self.next_push_time = self._schedule_push(self.state.time)

        if self.state.time >= self.next_resample - 1e-9:
            self.command = self._new_command()
            self.next_resample += self.config["commands"]["resample_interval"]
        else:
            self.command = Command(
                self.command.lin_vel_x, self.command.lin_vel_y, self._yaw_command()
            )

        kin = Dynamics.forward_kinematics(self.model, self.state)
        self.contacts = Dynamics.evaluate_contacts(
            self.model, self.state, self.terrain, self.sim_params, kin=kin
        )
        momentum = Dynamics.compute_momentum(self.model, self.state, kin)
        pdot, ldot = Dynamics.momentum_rates(
            self.model, self.state, self.contacts, self.sim_params.gravity, momentum
        )
        momentum = momentum.with_rates(pdot, ldot)

        quantities = Rewards.StepQuantities(
            model=self.model,
            state=self.state,
            kin=kin,
            contacts=self.contacts,
            momentum=momentum,
            command=self.command,
            action=action,
            target_q=target,
            torques=torques,
            terrain=self.terrain,
            nominal_height=self.nominal_height,
            control_dt=self.control_dt,
            control_joints=self.control_joints,
        )
        rewards, details = Rewards.compute_rewards(
            quantities, self.gait, self.weights, self.reward_params
        )

        termination = self.config["termination"]
        done, reason = check_termination(
            self.state,
            self.terrain,
            self.state.time,
            self.nominal_height,
            self.episode_length,
            termination["min_height_ratio"],
            termination["max_tilt"],
        )
        self.history.append(self._frame())
        actor, critic = self._observations()

        self.trajectory.record(
            self.state.base_pos[0],
            self.control_dt,
            rewards.values,
            details["zmp_distance"],
            self.command,
        )
        if self._log is not None:
            yaw = Dynamics.yaw_from_quat(self.state.base_quat)
            row = EpisodeLog.step_row(self.state, yaw, self.command, details, rewards)
            self._log.write_step(row)

        info.update(
            {
                "reason": reason,
                "time_out": reason == TerminationReason.TIMEOUT,
                "zmp_distance": details["zmp_distance"],
                "contact": details["contact"],
            }
        )
        if done:
            self._finish(reason, info)
        return actor, critic, rewards, done, info

    def _finish_diverged(self, info):
        rewards = Rewards.RewardVector(np.zeros(self.n_rewards), self.weights)
        self.trajectory.record(
            self.trajectory.final_x, self.control_dt, rewards.values, float("nan"), self.command
        )
        info.update(
            {
                "reason": TerminationReason.DIVERGENCE,
                "time_out": False,
                "zmp_distance": float("nan"),
                "contact": np.zeros(2, dtype=bool),
            }
        )
        self._finish(TerminationReason.DIVERGENCE, info)
        actor = np.concatenate([self.command.as_array()] + list(self.history))
        critic = np.zeros(self.layout.critic_dim)
        critic[: self.layout.actor_dim] = actor
        return actor, critic, rewards, True, info

    def _finish(self, reason, info):
        self.trajectory.reason = reason
        success_distance = self.config["termination"]["success_distance"]
        info["episode"] = episode_metrics(self.trajectory, success_distance)
        if self._log is not None:
            self._log.close()
            self._log = None
        detail_log.info(
            "env {} episode done: reason {} mxd {:.3f}".format(
                self.index, reason.value, info["episode"].mxd
            )
        )

    def _open_log(self, seed):
        if self._log is not None:
            self._log.close()
            self._log = None
        if self.episode_log_dir is None:
            return
        Util.ensure_directory(self.episode_log_dir)
        path = os.path.join(
            self.episode_log_dir,
            "episode-{:03d}-{:05d}.csv".format(self.index, self.episode_count),
        )
        header = {
            "seed": self.seed if seed is None else int(seed),
            "env_index": self.index,
            "episode": self.episode_count,
            "terrain": self.terrain_spec.to_dict(),
            "randomization": self.draw.to_dict(),
            "nominal_height": self.nominal_height,
        }
        self._log = EpisodeLog.EpisodeLogWriter(path, header)

    def mirror_obs(self, obs):
        return Observations.mirror_obs(obs, self.layout)

    def close(self):
        if self._log is not None:
            self._log.close()
            self._log = None


class VecEnv(object):
    """
    A batch of environments stepped together, optionally on a thread pool. Finished
    environments are reset immediately; `curriculum.update(index, stats)` picks their
    next level.
    """

    def __init__(
        self, model, config, num_envs, seed=0, curriculum=None, workers=None, **env_kwargs
    ):
        self.envs = [
            LocomotionEnv(model, config, seed=seed, index=i, **env_kwargs) for i in range(num_envs)
        ]
        self.curriculum = curriculum
        if workers is None:
            workers = Util.get_worker_count(default=1)
        self.workers = workers
        self._executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
        self.layout = self.envs[0].layout

    @property
    def num_envs(self):
        return len(self.envs)

    def _map(self, fn, *iterables):
        if self._executor is None:
            return list(map(fn, *iterables))
        return list(self._executor.map(fn, *iterables))

    def _level(self, index):
        if self.curriculum is None:
            return None
        return self.curriculum.levels[index]

    def reset(self):
        results = self._map(lambda env: env.reset(level=self._level(env.index)), self.envs)
        return _stack(results)

    def step(self, actions):
        actions = np.asarray(actions)
        results = self._map(lambda env, a: env.step(a), self.envs, actions)
        actor, critic, rewards, dones, infos = [], [], [], [], []
        for env, (a_obs, c_obs, reward, done, info) in zip(self.envs, results):
            if done:
                level = None
                if self.curriculum is not None:
                    level = self.curriculum.update(env.index, info["episode"])
                a_obs, c_obs = env.reset(level=level)
            actor.append(a_obs)
            critic.append(c_obs)
            rewards.append(reward.values)
            dones.append(done)
            infos.append(info)
        return np.stack(actor), np.stack(critic), np.stack(rewards), np.array(dones), infos

    def close(self):
        for env in self.envs:
            env.close()
        if self._executor is not None:
            self._executor.shutdown()


def _stack(results):
    actor, critic = zip(*results)
    return np.stack(actor), np.stack(critic)
