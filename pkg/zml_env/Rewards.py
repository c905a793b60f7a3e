"""
The reward vector: one named, weighted entry per term, never summed before storage.
"""

import numpy as np

from zml_balance import Balance
from zml_dynamics import Dynamics
from zml_terrain import Terrain
from zml_util import Util

zlog = Util.get_logger(module=__name__)

TASK_TERMS = ("lin_vel_tracking", "ang_vel_tracking", "low_speed")
GAIT_TERMS = (
    "zmp",
    "feet_air_time",
    "feet_contact",
    "feet_separation",
    "feet_slippage",
    "feet_height",
    "base_height",
    "feet_edge_distance",
)
REGULARIZATION_TERMS = (
    "angular_momentum",
    "orientation",
    "base_acceleration",
    "action_smoothness",
    "action_closeness",
    "torque",
    "dof_velocity",
    "dof_position_limit",
    "collision",
)
REWARD_NAMES = TASK_TERMS + GAIT_TERMS + REGULARIZATION_TERMS


class RewardVector(object):
    def __init__(self, values, weights, names=REWARD_NAMES):
        self.names = tuple(names)
        self.values = np.asarray(values, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def total(self):
        return float(np.sum(self.values))

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))


def weight_vector(weights, names=REWARD_NAMES):
    return np.array([float(weights[name]) for name in names])


class GaitTracker(object):
    """
    Per-episode gait bookkeeping across control steps: foot air time, previous contact,
    previous base velocity and the last two actions.
    """

    def __init__(self, n_actions, n_feet=2):
        self.air_time = np.zeros(n_feet)
        self.last_contact = np.ones(n_feet, dtype=bool)
        self.last_base_lin_vel = np.zeros(3)
        self.last_actions = np.zeros((2, n_actions))

    def touchdown(self, contact, dt):
        """
        Advance air timers; return (touchdown mask, air time at touchdown).
        """
        first_contact = contact & ~self.last_contact
        self.air_time = self.air_time + dt
        landed_air_time = np.where(first_contact, self.air_time, 0.0)
        self.air_time = np.where(contact, 0.0, self.air_time)
        self.last_contact = contact.copy()
        return first_contact, landed_air_time

    def push_action(self, action, base_lin_vel):
        self.last_actions = np.stack([np.asarray(action, dtype=float), self.last_actions[0]])
        self.last_base_lin_vel = np.array(base_lin_vel, dtype=float)


class StepQuantities(object):
    """
    Everything the reward terms read for one control step.
    """

    def __init__(
        self,
        model,
        state,
        kin,
        contacts,
        momentum,
        command,
        action,
        target_q,
        torques,
        terrain,
        nominal_height,
        control_dt,
        control_joints,
    ):
        self.model = model
        self.state = state
        self.kin = kin
        self.contacts = contacts
        self.momentum = momentum
        self.command = command
        self.action = action
        self.target_q = target_q
        self.torques = torques
        self.terrain = terrain
        self.nominal_height = nominal_height
        self.control_dt = control_dt
        self.control_joints = control_joints


def compute_rewards(quantities, gait, weights, params):
    """
    Evaluate every term, multiply by its weight and return (RewardVector, details).

    `weights` is the ordered weight array; `params` is the `rewards` config section
    extended with the `balance` section. `gait` is advanced by one control step.
    """
    qty = quantities
    model, state, command = qty.model, qty.state, qty.command
    contact = qty.contacts.foot_contact(params["contact_threshold"])

    lin_vel_base = Dynamics.to_base_frame(state.base_quat, state.base_lin_vel)
    ang_vel_base = Dynamics.to_base_frame(state.base_quat, state.base_ang_vel)
    gravity_base = Dynamics.projected_gravity(state.base_quat)
    sigma = params["tracking_sigma"]
    command_xy = np.array([command.lin_vel_x, command.lin_vel_y])
    moving = np.linalg.norm(command_xy) > params["moving_threshold"]

    terms = {}
    terms["lin_vel_tracking"] = np.exp(-np.sum((lin_vel_base[:2] - command_xy) ** 2) / sigma)
    terms["ang_vel_tracking"] = np.exp(-((ang_vel_base[2] - command.yaw_rate) ** 2) / sigma)
    terms["low_speed"] = float(
        command.lin_vel_x > params["low_speed_min_command"]
        and abs(lin_vel_base[0]) < params["low_speed_ratio"] * command.lin_vel_x
    )

    # Balance terms
    centers = Dynamics.foot_sole_centers(model, qty.kin)
    forces = qty.contacts.foot_force_sums
    csp = Balance.support_center(
        centers[0],
        centers[1],
        forces[0],
        forces[1],
        params["epsilon"],
        force_threshold=params["contact_threshold"],
    )
    zml = Balance.compute_zml(qty.momentum)
    zmp_distance, r_zmp = Balance.zmp_reward_or_flight(csp, zml, params["zmp_scale"])
    terms["zmp"] = r_zmp
    terms["angular_momentum"] = Balance.reward_angular_momentum(
        qty.momentum.angular_base, params["angular_momentum_scale"]
    )

    # Gait terms
    first_contact, landed_air_time = gait.touchdown(contact, qty.control_dt)
    air_bonus = np.exp(
        -(((landed_air_time - params["air_time_target"]) / params["air_time_sigma"]) ** 2)
    )
    terms["feet_air_time"] = float(np.sum(np.where(first_contact, air_bonus, 0.0))) * moving
    terms["feet_contact"] = float(moving and int(np.sum(contact)) == 1)

    yaw = Dynamics.yaw_from_quat(state.base_quat)
    lateral = -np.sin(yaw) * (centers[0, 0] - centers[1, 0]) + np.cos(yaw) * (
        centers[0, 1] - centers[1, 1]
    )
    low, high = params["separation_band"]
    separation = abs(lateral)
    terms["feet_separation"] = max(0.0, low - separation) + max(0.0, separation - high)

    foot_vel = Dynamics.foot_velocities(model, qty.kin)
    terms["feet_slippage"] = float(np.sum(contact * np.linalg.norm(foot_vel[:, :2], axis=1)))

    ground, _ = Terrain.height_at(qty.terrain, centers[:, 0], centers[:, 1])
    clearance = centers[:, 2] - ground
    terms["feet_height"] = float(
        np.sum(~contact * (clearance - params["feet_height_target"]) ** 2)
    )

    height = state.base_pos[2] - Terrain.path_elevation(qty.terrain, state.base_pos[0])
    terms["base_height"] = (height - qty.nominal_height) ** 2

    positions, _ = Dynamics.contact_points(model, qty.kin)
    owner = model.contact_owner
    sole = owner >= 0
    stance = np.zeros(len(owner), dtype=bool)
    stance[sole] = contact[owner[sole]]
    near_edge = Terrain.edge_distance(qty.terrain, positions[:, 1]) < params["edge_margin"]
    terms["feet_edge_distance"] = float(np.sum(stance & near_edge))

    # Regularization terms
    terms["orientation"] = float(np.sum(gravity_base[:2] ** 2))
    acceleration = (state.base_lin_vel - gait.last_base_lin_vel) / qty.control_dt
    terms["base_acceleration"] = float(np.sum(acceleration**2))
    second_difference = qty.action - 2.0 * gait.last_actions[0] + gait.last_actions[1]
    terms["action_smoothness"] = float(np.sum(second_difference**2))
    joints = qty.control_joints
    terms["action_closeness"] = float(np.sum((qty.target_q[joints] - state.q[joints]) ** 2))
    terms["torque"] = float(np.sum(np.asarray(qty.torques) ** 2))
    terms["dof_velocity"] = float(np.sum(state.qd**2))

    middle = 0.5 * (model.joint_upper + model.joint_lower)
    half_range = 0.5 * (model.joint_upper - model.joint_lower) * params["soft_limit_fraction"]
    terms["dof_position_limit"] = float(
        np.sum(np.maximum(state.q - (middle + half_range), 0.0))
        + np.sum(np.maximum((middle - half_range) - state.q, 0.0))
    )
    terms["collision"] = float(qty.contacts.other_count)

    gait.push_action(qty.action, state.base_lin_vel)

    raw = np.array([terms[name] for name in REWARD_NAMES], dtype=float)
    rewards = RewardVector(raw * weights, weights)
    details = {
        "zmp_distance": zmp_distance,
        "r_zmp": r_zmp,
        "contact": contact,
        "support_center": csp.point,
        "height": height,
        "raw": raw,
    }
    return rewards, details
