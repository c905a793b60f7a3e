"""
Run configuration: loading, merging over the shipped defaults, validation and dumps.
"""

import copy
import math
import os

import yaml

from zml_util import Util

zlog = Util.get_logger(module=__name__)

REPOSITORY_DIRECTORY = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIRECTORY = os.path.join(REPOSITORY_DIRECTORY, "config")
DEFAULT_CONFIG_PATH = os.path.join(CONFIG_DIRECTORY, "zml-default-config.yml")
RESOLVED_CONFIG_FILENAME = "resolved-config.yml"

TERRAIN_CHOICES = ("mixed", "narrow_flat", "narrow_slope", "narrow_stairs", "plane")
CONTROL_JOINT_CHOICES = ("all", "lower")
SCHEDULE_CHOICES = ("adaptive", "fixed")
DTYPE_CHOICES = ("float32", "float64")

# Evaluation difficulty: push velocity cap (m/s), slope gradient, stair step height (m)
DIFFICULTY_PRESETS = {
    "easy": {"push": 0.2, "gradient": 0.1, "step_height": 0.04},
    "medium": {"push": 0.4, "gradient": 0.15, "step_height": 0.06},
    "hard": {"push": 0.6, "gradient": 0.2, "step_height": 0.08},
}


class ValidationError(Exception):
    pass


class RunConfig(object):
    """
    Nested run configuration. `get`/`set` take dotted key paths ("train.num_envs").
    """

    def __init__(self, data, source=None):
        self.data = data
        self.source = source

    def __getitem__(self, key):
        return self.data[key]

    def get(self, path):
        node = self.data
        for key in path.split("."):
            if not isinstance(node, dict) or key not in node:
                raise ValidationError("Unknown config key: {}".format(path))
            node = node[key]
        return node

    def set(self, path, value):
        keys = path.split(".")
        node = self.data
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ValidationError("Unknown config key: {}".format(path))
            node = node[key]
        if not isinstance(node, dict) or keys[-1] not in node:
            raise ValidationError("Unknown config key: {}".format(path))
        node[keys[-1]] = value

    def copy(self):
        return RunConfig(copy.deepcopy(self.data), self.source)

    @property
    def robot_model_path(self):
        return self.data["robot_model"]

    def dump(self, directory):
        """
        Write the resolved configuration next to a command's outputs.
        """
        Util.ensure_directory(directory)
        path = os.path.join(directory, RESOLVED_CONFIG_FILENAME)
        try:
            with open(path, "w") as f:
                yaml.safe_dump(self.data, f, default_flow_style=False, sort_keys=False)
        except OSError:
            zlog.error("Error writing resolved config to '{}'".format(path))
            raise
        return path


def read_yaml(path):
    if not os.path.exists(path):
        raise ValidationError("Config file does not exist: {}".format(path))
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ValidationError("Config file could not be read: {} ({})".format(path, e))
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError("Config file is not a mapping: {}".format(path))
    return data


def merge_config(defaults, overrides, prefix=""):
    """
    Merge `overrides` over `defaults`, rejecting keys the defaults do not define.
    """
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        path = prefix + str(key)
        if key not in merged:
            raise ValidationError("Unknown config key: {}".format(path))
        if isinstance(merged[key], dict):
            if not isinstance(value, dict):
                raise ValidationError("Config key {} must be a mapping".format(path))
            merged[key] = merge_config(merged[key], value, path + ".")
        else:
            merged[key] = value
    return merged


def parse_override(text):
    """
    Parse a `key.path=value` override; the value is read as YAML.
    """
    if "=" not in text:
        raise ValidationError("Override must look like key.path=value: {}".format(text))
    path, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        raise ValidationError("Override value could not be parsed: {}".format(text))
    return path.strip(), value


def _resolve_model_path(data, base_dir):
    model = data.get("robot_model")
    if isinstance(model, str) and not os.path.isabs(model):
        data["robot_model"] = os.path.normpath(os.path.join(base_dir, model))
    return data


def load_run_config(path=None, overrides=()):
    """
    Load the defaults, merge the user config file and `--set` overrides, validate.
    """
    defaults = _resolve_model_path(read_yaml(DEFAULT_CONFIG_PATH), CONFIG_DIRECTORY)
    data = defaults
    if path is not None:
        user = _resolve_model_path(read_yaml(path), os.path.dirname(os.path.abspath(path)))
        data = merge_config(defaults, user)

    config = RunConfig(data, source=path)
    for text in overrides:
        key, value = parse_override(text)
        if key == "robot_model" and isinstance(value, str):
            value = os.path.abspath(value)
        config.set(key, value)

    RunConfigValidator(config)
    zlog.info("Loaded run config from {}".format(path or DEFAULT_CONFIG_PATH))
    return config


def _require(condition, message):
    if not condition:
        raise ValidationError(message)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _confirm_range(value, name, low=None, high=None):
    _require(
        isinstance(value, (list, tuple)) and len(value) == 2 and all(_is_number(v) for v in value),
        "{} must be a [low, high] pair of numbers".format(name),
    )
    _require(value[0] <= value[1], "{} must satisfy low <= high".format(name))
    if low is not None:
        _require(value[0] >= low, "{} must not go below {}".format(name, low))
    if high is not None:
        _require(value[1] <= high, "{} must not exceed {}".format(name, high))


def _confirm_positive(section, keys, name):
    for key in keys:
        _require(
            _is_number(section[key]) and section[key] > 0,
            "{}.{} must be a positive number".format(name, key),
        )


class RunConfigValidator(object):
    def __init__(self, config):
        self.config = config
        self.confirm_robot_model_exists()
        self.confirm_simulation_valid()
        self.confirm_terrain_valid()
        self.confirm_commands_valid()
        self.confirm_control_valid()
        self.confirm_rewards_valid()
        self.confirm_randomization_valid()
        self.confirm_train_valid()
        self.confirm_evaluation_valid()

    def confirm_robot_model_exists(self):
        path = self.config["robot_model"]
        _require(isinstance(path, str), "robot_model must be a path")
        _require(os.path.exists(path), "Robot model file does not exist: {}".format(path))

    def confirm_simulation_valid(self):
        simulation = self.config["simulation"]
        _confirm_positive(
            simulation,
            (
                "physics_dt",
                "episode_length",
                "gravity",
                "contact_stiffness",
                "contact_damping",
                "friction_velocity",
                "joint_limit_stiffness",
            ),
            "simulation",
        )
        _require(simulation["physics_dt"] <= 2e-3, "simulation.physics_dt must not exceed 2e-3")
        _require(
            isinstance(simulation["decimation"], int) and simulation["decimation"] >= 1,
            "simulation.decimation must be a positive integer",
        )
        _require(
            _is_number(simulation["joint_limit_damping"])
            and simulation["joint_limit_damping"] >= 0,
            "simulation.joint_limit_damping must be non-negative",
        )

    def confirm_terrain_valid(self):
        terrain = self.config["terrain"]
        _require(
            terrain["kind"] in TERRAIN_CHOICES,
            "terrain.kind must be one of {}".format(", ".join(TERRAIN_CHOICES)),
        )
        for key in ("initial_level", "max_level"):
            _require(
                isinstance(terrain[key], int) and 0 <= terrain[key] <= 19,
                "terrain.{} must be an integer in [0, 19]".format(key),
            )
        _require(
            terrain["initial_level"] <= terrain["max_level"],
            "terrain.initial_level must not exceed terrain.max_level",
        )
        _confirm_positive(terrain, ("path_length", "friction"), "terrain")

    def confirm_commands_valid(self):
        commands = self.config["commands"]
        _confirm_range(commands["lin_vel_x"], "commands.lin_vel_x", -0.5, 1.0)
        _confirm_range(commands["lin_vel_y"], "commands.lin_vel_y", -0.2, 0.2)
        _confirm_positive(commands, ("heading_gain", "yaw_limit", "resample_interval"), "commands")

    def confirm_control_valid(self):
        control = self.config["control"]
        _require(
            control["control_joints"] in CONTROL_JOINT_CHOICES,
            "control.control_joints must be one of {}".format(", ".join(CONTROL_JOINT_CHOICES)),
        )
        _confirm_positive(control, ("action_scale", "clip_actions"), "control")
        for key in ("history_length", "privileged_dim"):
            _require(
                isinstance(control[key], int) and control[key] >= 1,
                "control.{} must be a positive integer".format(key),
            )

    def confirm_rewards_valid(self):
        rewards = self.config["rewards"]
        for name, weight in rewards["weights"].items():
            _require(_is_number(weight), "rewards.weights.{} must be a finite number".format(name))
        _confirm_range(rewards["separation_band"], "rewards.separation_band", 0.0)
        _confirm_positive(
            rewards,
            ("tracking_sigma", "air_time_target", "air_time_sigma", "feet_height_target"),
            "rewards",
        )
        _require(
            _is_number(rewards["soft_limit_fraction"]) and 0 < rewards["soft_limit_fraction"] <= 1,
            "rewards.soft_limit_fraction must lie in (0, 1]",
        )

    def confirm_randomization_valid(self):
        randomization = self.config["randomization"]
        _confirm_range(randomization["friction"], "randomization.friction", 0.0)
        for key in ("kp_scale", "kd_scale", "link_mass_scale"):
            _confirm_range(randomization[key], "randomization." + key, 0.0)
        _confirm_range(randomization["load_mass"], "randomization.load_mass")
        _confirm_range(randomization["base_com_offset"], "randomization.base_com_offset")
        simulation = self.config["simulation"]
        _confirm_range(
            randomization["action_delay"],
            "randomization.action_delay",
            0.0,
            simulation["physics_dt"] * simulation["decimation"],
        )
        _require(
            _is_number(randomization["action_noise"]) and randomization["action_noise"] >= 0,
            "randomization.action_noise must be non-negative",
        )
        _confirm_range(randomization["torque_rfi"]["scale"], "randomization.torque_rfi.scale", 0.0)
        _confirm_positive(randomization["push"], ("mean_interval",), "randomization.push")
        for key in ("lin_vel", "ang_vel"):
            _require(
                _is_number(randomization["push"][key]) and randomization["push"][key] >= 0,
                "randomization.push.{} must be non-negative".format(key),
            )

    def confirm_train_valid(self):
        train = self.config["train"]
        for key in ("gamma", "lam"):
            _require(
                _is_number(train[key]) and 0 < train[key] <= 1,
                "train.{} must lie in (0, 1]".format(key),
            )
        counts = (
            "num_envs",
            "horizon",
            "iterations",
            "epochs",
            "minibatches",
            "checkpoint_interval",
        )
        for key in counts:
            _require(
                isinstance(train[key], int) and train[key] >= 1,
                "train.{} must be a positive integer".format(key),
            )
        _confirm_positive(
            train,
            ("clip", "learning_rate", "desired_kl", "max_grad_norm", "init_noise_std"),
            "train",
        )
        _require(
            train["schedule"] in SCHEDULE_CHOICES,
            "train.schedule must be one of {}".format(", ".join(SCHEDULE_CHOICES)),
        )
        _require(
            train["dtype"] in DTYPE_CHOICES,
            "train.dtype must be one of {}".format(", ".join(DTYPE_CHOICES)),
        )
        for key in ("actor_hidden", "critic_hidden"):
            sizes = train[key]
            _require(
                isinstance(sizes, list)
                and len(sizes) > 0
                and all(isinstance(s, int) and s > 0 for s in sizes),
                "train.{} must be a list of positive layer sizes".format(key),
            )
        curriculum = train["curriculum"]
        _require(
            0 <= curriculum["demote_ratio"] <= curriculum["promote_ratio"],
            "train.curriculum ratios must satisfy 0 <= demote_ratio <= promote_ratio",
        )

    def confirm_evaluation_valid(self):
        evaluation = self.config["evaluation"]
        _require(
            evaluation["difficulty"] in DIFFICULTY_PRESETS,
            "evaluation.difficulty must be one of {}".format(", ".join(DIFFICULTY_PRESETS)),
        )
        _require(
            evaluation["terrain"] in TERRAIN_CHOICES[1:],
            "evaluation.terrain must be one of {}".format(", ".join(TERRAIN_CHOICES[1:])),
        )
        _require(
            isinstance(evaluation["episodes"], int) and evaluation["episodes"] >= 1,
            "evaluation.episodes must be a positive integer",
        )
        for width in evaluation["widths"]:
            _require(
                _is_number(width) and 0.2 <= width <= 1.0,
                "evaluation.widths must lie in [0.2, 1.0]",
            )
