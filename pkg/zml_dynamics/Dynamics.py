"""
Floating-base rigid-body dynamics for the articulated biped.

The generalized velocity is [base linear velocity (world), base angular velocity (world),
joint velocities]. Equations of motion are assembled in Kane form from link Jacobians
and bias accelerations. Penalty contact, joint-limit and PD forces are integrated
implicitly through their linearization, the resulting system is solved with a Cholesky
factorization, and positions follow the updated velocities.
"""

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.transform import Rotation

from zml_dynamics.Model import MIRROR
from zml_terrain import Terrain
from zml_util import Util

zlog = Util.get_logger(module=__name__)

GRAVITY = 9.81

# Any state entry beyond this magnitude is treated as a blown-up simulation
DIVERGENCE_LIMIT = 1e6

MAX_DT = 2e-3


class NumericalDivergence(Exception):
    pass


class SimParams(object):
    """
    Contact, joint-limit and gravity constants used by `step`.

    `friction` overrides the terrain friction coefficient when set (randomization).
    """

    def __init__(
        self,
        contact_stiffness=2e4,
        contact_damping=200.0,
        friction_velocity=0.05,
        joint_limit_stiffness=500.0,
        joint_limit_damping=5.0,
        gravity=GRAVITY,
        friction=None,
    ):
        self.contact_stiffness = contact_stiffness
        self.contact_damping = contact_damping
        self.friction_velocity = friction_velocity
        self.joint_limit_stiffness = joint_limit_stiffness
        self.joint_limit_damping = joint_limit_damping
        self.gravity = gravity
        self.friction = friction

    @classmethod
    def from_config(cls, simulation, friction=None):
        return cls(
            contact_stiffness=simulation["contact_stiffness"],
            contact_damping=simulation["contact_damping"],
            friction_velocity=simulation["friction_velocity"],
            joint_limit_stiffness=simulation["joint_limit_stiffness"],
            joint_limit_damping=simulation["joint_limit_damping"],
            gravity=simulation["gravity"],
            friction=friction,
        )

    @property
    def gravity_vector(self):
        return np.array([0.0, 0.0, -self.gravity])


class SimState(object):
    def __init__(self, base_pos, base_quat, base_lin_vel, base_ang_vel, q, qd, time=0.0):
        self.base_pos = np.array(base_pos, dtype=float)
        self.base_quat = np.array(base_quat, dtype=float)
        self.base_lin_vel = np.array(base_lin_vel, dtype=float)
        self.base_ang_vel = np.array(base_ang_vel, dtype=float)
        self.q = np.array(q, dtype=float)
        self.qd = np.array(qd, dtype=float)
        self.time = float(time)

    @classmethod
    def at_rest(cls, model, base_pos=(0.0, 0.0, 0.0), base_quat=(0.0, 0.0, 0.0, 1.0), q=None):
        q = model.default_q if q is None else q
        return cls(base_pos, base_quat, np.zeros(3), np.zeros(3), q, np.zeros(model.n_dof))

    def copy(self):
        return SimState(
            self.base_pos,
            self.base_quat,
            self.base_lin_vel,
            self.base_ang_vel,
            self.q,
            self.qd,
            self.time,
        )

    @property
    def velocity(self):
        return np.concatenate([self.base_lin_vel, self.base_ang_vel, self.qd])

    def as_vector(self):
        return np.concatenate(
            [
                self.base_pos,
                self.base_quat,
                self.base_lin_vel,
                self.base_ang_vel,
                self.q,
                self.qd,
                [self.time],
            ]
        )

    def is_valid(self):
        vector = self.as_vector()
        return bool(np.all(np.isfinite(vector)) and np.all(np.abs(vector) <= DIVERGENCE_LIMIT))


class LinkKinematics(object):
    """
    World-frame link poses and velocities for one state.
    """

    def __init__(self, rotations, origins, com_pos, com_vel, ang_vel, joint_origins, joint_axes):
        self.rotations = rotations
        self.origins = origins
        self.com_pos = com_pos
        self.com_vel = com_vel
        self.ang_vel = ang_vel
        self.joint_origins = joint_origins
        self.joint_axes = joint_axes

    def point_positions(self, links, offsets):
        return self.origins[links] + np.einsum("cij,cj->ci", self.rotations[links], offsets)

    def point_velocities(self, links, positions):
        return self.com_vel[links] + np.cross(self.ang_vel[links], positions - self.com_pos[links])


class ContactSet(object):
    """
    Contact points and forces applied during one physics step.

    Only active points (penetrating the ground) are listed. Moments are about the
    world origin.
    """

    def __init__(self, foot_positions, foot_forces, other_positions, other_forces):
        self.foot_positions = [np.reshape(p, (-1, 3)) for p in foot_positions]
        self.foot_forces = [np.reshape(f, (-1, 3)) for f in foot_forces]
        self.other_positions = np.reshape(other_positions, (-1, 3))
        self.other_forces = np.reshape(other_forces, (-1, 3))

    @classmethod
    def empty(cls, n_feet=2):
        return cls([[]] * n_feet, [[]] * n_feet, [], [])

    @property
    def foot_force_sums(self):
        return np.array([forces.sum(axis=0) for forces in self.foot_forces]).reshape(-1, 3)

    @property
    def in_contact(self):
        return self.foot_contact(0.0)

    def foot_contact(self, threshold=0.0):
        return np.linalg.norm(self.foot_force_sums, axis=1) > threshold

    def _all(self):
        positions = np.concatenate(self.foot_positions + [self.other_positions])
        forces = np.concatenate(self.foot_forces + [self.other_forces])
        return positions, forces

    @property
    def total_force(self):
        _, forces = self._all()
        return forces.sum(axis=0)

    @property
    def total_moment(self):
        positions, forces = self._all()
        return np.cross(positions, forces).sum(axis=0)

    @property
    def other_count(self):
        return len(self.other_positions)


class MomentumState(object):
    def __init__(self, total_mass, com, linear, angular, angular_base, pdot=None, ldot=None):
        self.total_mass = total_mass
        self.com = com
        self.linear = linear
        self.angular = angular
        self.angular_base = angular_base
        self.pdot = pdot
        self.ldot = ldot

    def with_rates(self, pdot, ldot):
        return MomentumState(
            self.total_mass, self.com, self.linear, self.angular, self.angular_base, pdot, ldot
        )


def quat_to_matrix(quat):
    return Rotation.from_quat(quat).as_matrix()


def quat_from_yaw(yaw):
    return Rotation.from_euler("z", yaw).as_quat()


def yaw_from_quat(quat):
    heading = quat_to_matrix(quat) @ np.array([1.0, 0.0, 0.0])
    return float(np.arctan2(heading[1], heading[0]))


def integrate_quaternion(quat, ang_vel, dt):
    """
    Advance a scalar-last quaternion by a world-frame angular velocity and renormalize.
    """
    updated = (Rotation.from_rotvec(np.asarray(ang_vel) * dt) * Rotation.from_quat(quat)).as_quat()
    return updated / np.linalg.norm(updated)


def projected_gravity(quat):
    """
    Unit gravity direction expressed in the base frame.
    """
    return quat_to_matrix(quat).T @ np.array([0.0, 0.0, -1.0])


def to_base_frame(quat, vector):
    return quat_to_matrix(quat).T @ np.asarray(vector)


def forward_kinematics(model, state):
    n_links = model.n_links
    rotations = np.empty((n_links, 3, 3))
    origins = np.empty((n_links, 3))
    joint_origins = np.empty((model.n_dof, 3))
    joint_axes = np.empty((model.n_dof, 3))

    rotations[0] = quat_to_matrix(state.base_quat)
    origins[0] = state.base_pos
    joint_rotations = Rotation.from_rotvec(model.joint_axis * state.q[:, None]).as_matrix()
    for j in model.joint_order:
        parent, child = model.joint_parent[j], model.joint_child[j]
        origins[child] = origins[parent] + rotations[parent] @ model.joint_origin[j]
        rotations[child] = rotations[parent] @ joint_rotations[j]
        joint_origins[j] = origins[child]
        joint_axes[j] = rotations[parent] @ model.joint_axis[j]

    com_pos = origins + np.einsum("lij,lj->li", rotations, model.link_com)

    joint_rates = state.qd[:, None] * joint_axes
    ang_vel = state.base_ang_vel + model.ancestors @ joint_rates
    lever = np.cross(joint_axes[None, :, :], com_pos[:, None, :] - joint_origins[None, :, :])
    com_vel = (
        state.base_lin_vel
        + np.cross(state.base_ang_vel, com_pos - state.base_pos)
        + np.einsum("lj,ljk->lk", model.ancestors * state.qd, lever)
    )
    return LinkKinematics(rotations, origins, com_pos, com_vel, ang_vel, joint_origins, joint_axes)


def world_inertias(model, kin):
    return kin.rotations @ model.link_inertia @ np.transpose(kin.rotations, (0, 2, 1))


def link_jacobians(model, kin, base_pos):
    """
    CoM linear and angular Jacobians, each of shape (links, 3, 6 + n).
    """
    jv = point_jacobians(model, kin, base_pos, np.arange(model.n_links), kin.com_pos)
    jw = np.zeros_like(jv)
    jw[:, :, 3:6] = np.eye(3)
    jw[:, :, 6:] = np.transpose(model.ancestors[:, :, None] * kin.joint_axes[None], (0, 2, 1))
    return jv, jw


def point_jacobians(model, kin, base_pos, links, positions):
    """
    Linear Jacobians, shape (points, 3, 6 + n), of world points fixed in the given links.
    """
    positions = np.reshape(positions, (-1, 3))
    jacobian = np.zeros((len(positions), 3, model.n_velocity))
    jacobian[:, :, 0:3] = np.eye(3)
    jacobian[:, :, 3:6] = -_skew(positions - base_pos)
    lever = np.cross(kin.joint_axes[None], positions[:, None, :] - kin.joint_origins[None])
    jacobian[:, :, 6:] = np.transpose(model.ancestors[links][:, :, None] * lever, (0, 2, 1))
    return jacobian


def _skew(vectors):
    vectors = np.asarray(vectors)
    out = np.zeros(vectors.shape[:-1] + (3, 3))
    x, y, z = vectors[..., 0], vectors[..., 1], vectors[..., 2]
    out[..., 0, 1], out[..., 0, 2] = -z, y
    out[..., 1, 0], out[..., 1, 2] = z, -x
    out[..., 2, 0], out[..., 2, 1] = -y, x
    return out


def bias_accelerations(model, kin, state):
    """
    Link CoM linear and angular accelerations at zero generalized acceleration.
    """
    parents = model.joint_parent
    parent_ang_vel = kin.ang_vel[parents]
    # Velocity of each joint origin, a point fixed in the parent link
    origin_vel = kin.com_vel[parents] + np.cross(
        parent_ang_vel, kin.joint_origins - kin.com_pos[parents]
    )
    axis_rate = np.cross(parent_ang_vel, kin.joint_axes)

    weights = model.ancestors * state.qd
    rel_pos = kin.com_pos[:, None, :] - kin.joint_origins[None, :, :]
    rel_vel = kin.com_vel[:, None, :] - origin_vel[None, :, :]
    terms = np.cross(axis_rate[None], rel_pos) + np.cross(kin.joint_axes[None], rel_vel)

    linear = np.cross(state.base_ang_vel, kin.com_vel - state.base_lin_vel) + np.einsum(
        "lj,ljk->lk", weights, terms
    )
    angular = weights @ axis_rate
    return linear, angular


def mass_matrix_and_bias(model, kin, state, gravity=GRAVITY):
    """
    Return (M, h) such that M * accel + h equals the applied generalized forces.
    """
    jv, jw = link_jacobians(model, kin, state.base_pos)
    inertia = world_inertias(model, kin)
    lin_bias, ang_bias = bias_accelerations(model, kin, state)
    g = np.array([0.0, 0.0, -gravity])

    nv = model.n_velocity
    mass = np.repeat(model.link_mass, 3)
    jv_flat = jv.reshape(-1, nv)
    jw_flat = jw.reshape(-1, nv)
    inertia_jw = (inertia @ jw).reshape(-1, nv)
    matrix = (jv_flat * mass[:, None]).T @ jv_flat + jw_flat.T @ inertia_jw

    inertia_omega = np.einsum("lij,lj->li", inertia, kin.ang_vel)
    moment = np.einsum("lij,lj->li", inertia, ang_bias) + np.cross(kin.ang_vel, inertia_omega)
    force = model.link_mass[:, None] * (lin_bias - g)
    bias = jv_flat.T @ force.reshape(-1) + jw_flat.T @ moment.reshape(-1)
    return matrix, bias


def contact_points(model, kin):
    """
    World positions and velocities of every contact candidate (sole and collision points).
    """
    positions = kin.point_positions(model.contact_links, model.contact_offsets)
    velocities = kin.point_velocities(model.contact_links, positions)
    return positions, velocities


def contact_forces(model, kin, terrain, params):
    """
    Penalty forces on every contact candidate: a spring-damper along the vertical normal
    and regularized Coulomb friction bounded by mu times the normal force.
    """
    positions, velocities = contact_points(model, kin)
    forces = np.zeros_like(positions)
    if terrain is None or len(positions) == 0:
        return positions, forces, np.zeros(len(positions), dtype=bool)

    ground, _ = Terrain.height_at(terrain, positions[:, 0], positions[:, 1])
    depth = ground - positions[:, 2]
    active = depth > 0.0
    if not np.any(active):
        return positions, forces, active

    normal = np.maximum(
        params.contact_stiffness * depth - params.contact_damping * velocities[:, 2], 0.0
    )
    mu = _friction(terrain, params)
    tangential = velocities[:, :2]
    speed = np.sqrt(np.sum(tangential * tangential, axis=1) + params.friction_velocity**2)
    forces[:, :2] = -mu * (normal / speed)[:, None] * tangential
    forces[:, 2] = normal
    forces[~active] = 0.0
    active = active & (normal > 0.0)
    return positions, forces, active


def _friction(terrain, params):
    return terrain.friction if params.friction is None else params.friction


def contact_gains(velocities, forces, mu, params):
    """
    Per-point stiffness and damping matrices of the penalty law, each (points, 3, 3):
    the negated derivatives of the contact force with respect to point position and
    velocity. Friction coupling through the normal force is left out, so both are
    symmetric positive semi-definite.
    """
    count = len(velocities)
    stiffness = np.zeros((count, 3, 3))
    damping = np.zeros((count, 3, 3))
    stiffness[:, 2, 2] = params.contact_stiffness
    damping[:, 2, 2] = params.contact_damping
    tangential = velocities[:, :2]
    speed_sq = np.sum(tangential * tangential, axis=1) + params.friction_velocity**2
    scale = mu * forces[:, 2] / np.sqrt(speed_sq)
    outer = tangential[:, :, None] * tangential[:, None, :] / speed_sq[:, None, None]
    damping[:, :2, :2] = scale[:, None, None] * (np.eye(2) - outer)
    return stiffness, damping


def _contact_set(model, positions, forces, active):
    owner = model.contact_owner
    foot_positions, foot_forces = [], []
    for index in range(len(model.feet)):
        mask = active & (owner == index)
        foot_positions.append(positions[mask])
        foot_forces.append(forces[mask])
    mask = active & (owner < 0)
    return ContactSet(foot_positions, foot_forces, positions[mask], forces[mask])


def evaluate_contacts(model, state, terrain, params=None, kin=None):
    """
    Penalty contacts at this state. `step` applies these plus the implicit correction
    over the step, so its returned contacts differ by O(dt).
    """
    if params is None:
        params = SimParams()
    if kin is None:
        kin = forward_kinematics(model, state)
    positions, forces, active = contact_forces(model, kin, terrain, params)
    return _contact_set(model, positions, forces, active)


def _contact_generalized_forces(model, kin, base_pos, positions, forces, active):
    nv = model.n_velocity
    generalized = np.zeros(nv)
    if not np.any(active):
        return generalized
    positions, forces = positions[active], forces[active]
    links = model.contact_links[active]
    generalized[0:3] = forces.sum(axis=0)
    generalized[3:6] = np.cross(positions - base_pos, forces).sum(axis=0)
    rel = positions[:, None, :] - kin.joint_origins[None, :, :]
    moments = np.cross(rel, forces[:, None, :])
    projected = np.einsum("cjk,jk->cj", moments, kin.joint_axes)
    generalized[6:] = np.sum(model.ancestors[links] * projected, axis=0)
    return generalized


def joint_limit_torques(model, q, qd, params):
    over = np.maximum(q - model.joint_upper, 0.0)
    under = np.maximum(model.joint_lower - q, 0.0)
    violated = (over > 0.0) | (under > 0.0)
    torque = params.joint_limit_stiffness * (under - over)
    torque = torque - np.where(violated, params.joint_limit_damping * qd, 0.0)
    return torque


def joint_limit_gains(model, q, params):
    """
    Per-joint (stiffness, damping) of `joint_limit_torques`, zero inside the limits.
    """
    violated = (q > model.joint_upper) | (q < model.joint_lower)
    stiffness = np.where(violated, params.joint_limit_stiffness, 0.0)
    damping = np.where(violated, params.joint_limit_damping, 0.0)
    return stiffness, damping


def pd_torques(model, state, target_q, gains=None):
    """
    Joint PD law clamped to the torque limits. `gains` is a (kp, kd) pair of per-joint
    arrays and defaults to the model gains.
    """
    kp, kd = (model.kp, model.kd) if gains is None else gains
    torque = np.asarray(kp) * (np.asarray(target_q) - state.q) - np.asarray(kd) * state.qd
    return np.clip(torque, -model.torque_limit, model.torque_limit)


def pd_gains(model, torques, gains=None):
    """
    The (kp, kd) pair `step` integrates implicitly for PD `torques`. Saturated joints no
    longer respond to position or velocity and get zero gains.
    """
    kp, kd = (model.kp, model.kd) if gains is None else gains
    free = np.abs(np.asarray(torques)) < np.asarray(model.torque_limit)
    return np.where(free, kp, 0.0), np.where(free, kd, 0.0)


def check_divergence(state):
    vector = state.as_vector()
    if not np.all(np.isfinite(vector)):
        raise NumericalDivergence("Non-finite simulator state at t={:.4f}".format(state.time))
    if np.any(np.abs(vector) > DIVERGENCE_LIMIT):
        raise NumericalDivergence(
            "Simulator state exceeded {:.0e} at t={:.4f}".format(DIVERGENCE_LIMIT, state.time)
        )


def step(model, state, torques, terrain, dt, params=None, joint_gains=None):
    """
    Advance the state by one physics step.

    `terrain` is a height field, or None for a robot suspended with nothing below it.
    `joint_gains` is an optional (stiffness, damping) pair of per-joint arrays saying how
    `torques` react to joint position and velocity, as `pd_gains` returns for a PD law.

    Contact, joint-limit and joint-gain forces are linearized about the current state and
    evaluated at the end of the step, so the solve is (M + dt D + dt^2 K) a = rhs - dt K v
    with D and K their damping and stiffness in generalized coordinates. Velocities are
    updated first, then positions. Returns the new state and the contacts applied during
    the step.
    """
    if not 0.0 < dt <= MAX_DT:
        raise ValueError("Physics dt must lie in (0, {}], got {}".format(MAX_DT, dt))
    if params is None:
        params = SimParams()

    kin = forward_kinematics(model, state)
    positions, forces, active = contact_forces(model, kin, terrain, params)
    velocity = state.velocity

    matrix, bias = mass_matrix_and_bias(model, kin, state, params.gravity)
    rhs = _contact_generalized_forces(model, kin, state.base_pos, positions, forces, active) - bias
    rhs[6:] += np.asarray(torques) + joint_limit_torques(model, state.q, state.qd, params)

    nv = model.n_velocity
    stiffness = np.zeros((nv, nv))
    damping = np.zeros((nv, nv))
    joint_stiffness, joint_damping = joint_limit_gains(model, state.q, params)
    if joint_gains is not None:
        joint_stiffness = joint_stiffness + np.asarray(joint_gains[0])
        joint_damping = joint_damping + np.asarray(joint_gains[1])
    joints = np.arange(6, nv)
    stiffness[joints, joints] = joint_stiffness
    damping[joints, joints] = joint_damping

    if np.any(active):
        jacobian = point_jacobians(
            model, kin, state.base_pos, model.contact_links[active], positions[active]
        )
        point_velocity = np.einsum("pij,j->pi", jacobian, velocity)
        point_stiffness, point_damping = contact_gains(
            point_velocity, forces[active], _friction(terrain, params), params
        )
        stiffness += np.einsum("pai,pab,pbj->ij", jacobian, point_stiffness, jacobian)
        damping += np.einsum("pai,pab,pbj->ij", jacobian, point_damping, jacobian)

    rhs -= dt * stiffness @ velocity
    effective = matrix + dt * damping + dt * dt * stiffness

    accel = np.zeros(nv)
    free = slice(6, None) if model.fixed_base else slice(0, None)
    try:
        factor = cho_factor(effective[free, free])
        accel[free] = cho_solve(factor, rhs[free])
    except (LinAlgError, ValueError) as e:
        raise NumericalDivergence("Mass matrix solve failed at t={:.4f}: {}".format(state.time, e))

    applied = forces.copy()
    if np.any(active):
        change = dt * np.einsum("pij,j->pi", jacobian, accel)
        applied[active] = (
            forces[active]
            - np.einsum("pab,pb->pa", point_damping, change)
            - dt * np.einsum("pab,pb->pa", point_stiffness, point_velocity + change)
        )
    contacts = _contact_set(model, positions, applied, active)

    velocity = velocity + dt * accel
    lin_vel, ang_vel, qd = velocity[0:3], velocity[3:6], velocity[6:]
    new_state = SimState(
        state.base_pos + dt * lin_vel,
        integrate_quaternion(state.base_quat, ang_vel, dt),
        lin_vel,
        ang_vel,
        state.q + dt * qd,
        qd,
        state.time + dt,
    )
    check_divergence(new_state)
    return new_state, contacts


def compute_momentum(model, state, kin=None):
    if kin is None:
        kin = forward_kinematics(model, state)
    mass = model.link_mass
    total_mass = model.total_mass
    inertia_omega = np.einsum("lij,lj->li", world_inertias(model, kin), kin.ang_vel)

    momenta = mass[:, None] * kin.com_vel
    linear = momenta.sum(axis=0)
    com = (mass[:, None] * kin.com_pos).sum(axis=0) / total_mass
    angular = (np.cross(kin.com_pos, momenta) + inertia_omega).sum(axis=0)
    rel_momenta = mass[:, None] * (kin.com_vel - state.base_lin_vel)
    angular_base = (np.cross(kin.com_pos - state.base_pos, rel_momenta) + inertia_omega).sum(axis=0)
    return MomentumState(total_mass, com, linear, angular, angular_base)


def momentum_rates(model, state, contacts, gravity=GRAVITY, momentum=None):
    """
    Analytic Newton-Euler rates: dP/dt = M g + f and dL/dt = p_com x M g + tau.
    """
    if momentum is None:
        momentum = compute_momentum(model, state)
    weight = momentum.total_mass * np.array([0.0, 0.0, -gravity])
    pdot = weight + contacts.total_force
    ldot = np.cross(momentum.com, weight) + contacts.total_moment
    return pdot, ldot


def mechanical_energy(model, state, gravity=GRAVITY):
    kin = forward_kinematics(model, state)
    inertia_omega = np.einsum("lij,lj->li", world_inertias(model, kin), kin.ang_vel)
    kinetic = 0.5 * np.sum(model.link_mass * np.sum(kin.com_vel**2, axis=1))
    kinetic += 0.5 * np.sum(kin.ang_vel * inertia_omega)
    potential = gravity * np.sum(model.link_mass * kin.com_pos[:, 2])
    return float(kinetic + potential)


def foot_sole_centers(model, kin):
    links = np.array([foot.link for foot in model.feet], dtype=int)
    offsets = np.array([foot.sole_center for foot in model.feet]).reshape(-1, 3)
    return kin.point_positions(links, offsets)


def foot_velocities(model, kin):
    """
    Linear velocities of the sole centers.
    """
    centers = foot_sole_centers(model, kin)
    links = np.array([foot.link for foot in model.feet], dtype=int)
    return kin.point_velocities(links, centers)


def nominal_base_height(model):
    """
    Base height above flat ground with the robot at its default pose and feet touching.
    """
    kin = forward_kinematics(model, SimState.at_rest(model))
    positions, _ = contact_points(model, kin)
    sole = positions[model.contact_owner >= 0]
    if len(sole) == 0:
        return 0.0
    return float(-np.min(sole[:, 2]))


def apply_base_velocity_delta(state, lin_delta=None, ang_delta=None):
    pushed = state.copy()
    if lin_delta is not None:
        pushed.base_lin_vel = pushed.base_lin_vel + np.asarray(lin_delta)
    if ang_delta is not None:
        pushed.base_ang_vel = pushed.base_ang_vel + np.asarray(ang_delta)
    return pushed


def mirror_joint_vector(model, values):
    values = np.asarray(values)
    return model.symmetry_sign * values[model.symmetry_perm]


def mirror_state(model, state):
    """
    Reflect a state across the x-z plane.
    """
    flip_axial = np.array([-1.0, 1.0, -1.0])
    quat = state.base_quat
    return SimState(
        MIRROR @ state.base_pos,
        [-quat[0], quat[1], -quat[2], quat[3]],
        MIRROR @ state.base_lin_vel,
        flip_axial * state.base_ang_vel,
        mirror_joint_vector(model, state.q),
        mirror_joint_vector(model, state.qd),
        state.time,
    )
