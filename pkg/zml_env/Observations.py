"""
Observation layout for the asymmetric actor-critic and the reflection maps acting on
observations and actions.

Actor observation: command (3) followed by `history` frames, oldest first. Each frame is
[q - q_default (n), dq (n), base angular velocity (3), projected gravity (3),
previous action (m)] where m is the number of controlled joints (m = n by default).

Critic observation: the actor observation, then the privileged block
[base linear velocity (3), base height above terrain (1), foot contacts (2),
kp scales (n), kd scales (n), link mass scales (links), zero padding] of fixed size,
then the terrain height window.
"""

import numpy as np

from zml_terrain import Terrain

COMMAND_DIM = 3

# Sign flips of the x-z reflection on polar and axial 3-vectors
POLAR_SIGNS = np.array([1.0, -1.0, 1.0])
AXIAL_SIGNS = np.array([-1.0, 1.0, -1.0])


class ObservationLayout(object):
    def __init__(self, model, control_joints, history=4, privileged_dim=70):
        self.model = model
        self.control_joints = np.asarray(control_joints, dtype=int)
        self.n_dof = model.n_dof
        self.n_actions = len(self.control_joints)
        self.history = int(history)
        self.privileged_dim = int(privileged_dim)
        self.window_size = Terrain.WINDOW_SIZE

        self.frame_dim = 2 * self.n_dof + 6 + self.n_actions
        self.actor_dim = COMMAND_DIM + self.history * self.frame_dim
        self.privileged_used = 3 + 1 + 2 + 2 * self.n_dof + model.n_links
        if self.privileged_used > self.privileged_dim:
            raise ValueError(
                "Privileged block needs {} entries but privileged_dim is {}".format(
                    self.privileged_used, self.privileged_dim
                )
            )
        self.critic_dim = self.actor_dim + self.privileged_dim + self.window_size

        self.action_perm, self.action_sign = self._action_mirror()
        self.actor_mirror = self._actor_mirror()
        self.critic_mirror = self._critic_mirror()

    @property
    def privileged_slice(self):
        return slice(self.actor_dim, self.actor_dim + self.privileged_dim)

    @property
    def window_slice(self):
        return slice(self.actor_dim + self.privileged_dim, self.critic_dim)

    def _action_mirror(self):
        position = {joint: k for k, joint in enumerate(self.control_joints)}
        perm = np.empty(self.n_actions, dtype=int)
        for k, joint in enumerate(self.control_joints):
            partner = self.model.symmetry_perm[joint]
            if partner not in position:
                raise ValueError(
                    "Controlled joints lack the mirror partner of {}".format(
                        self.model.joint_names[joint]
                    )
                )
            perm[k] = position[partner]
        return perm, self.model.symmetry_sign[self.control_joints].copy()

    def _actor_mirror(self):
        joint_perm, joint_sign = self.model.symmetry_perm, self.model.symmetry_sign
        blocks = [(np.arange(3), np.array([1.0, -1.0, -1.0]))]
        offset = COMMAND_DIM
        for _ in range(self.history):
            parts = (
                (joint_perm, joint_sign),
                (joint_perm, joint_sign),
                (np.arange(3), AXIAL_SIGNS),
                (np.arange(3), POLAR_SIGNS),
                (self.action_perm, self.action_sign),
            )
            for perm, sign in parts:
                blocks.append((offset + perm, sign))
                offset += len(perm)
        return _concatenate(blocks)

    def _critic_mirror(self):
        n, n_links = self.n_dof, self.model.n_links
        joint_perm = self.model.symmetry_perm
        ones_n = np.ones(n)
        actor_src, actor_sign = self.actor_mirror
        blocks = [(actor_src, actor_sign)]
        offset = self.actor_dim
        parts = (
            (np.arange(3), POLAR_SIGNS),
            (np.arange(1), np.ones(1)),
            (np.array([1, 0]), np.ones(2)),
            (joint_perm, ones_n),
            (joint_perm, ones_n),
            (self.model.link_perm, np.ones(n_links)),
            (np.arange(self.privileged_dim - self.privileged_used), None),
        )
        for perm, sign in parts:
            sign = np.ones(len(perm)) if sign is None else sign
            blocks.append((offset + perm, sign))
            offset += len(perm)

        nx, ny = Terrain.WINDOW_SHAPE
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        window_perm = (ix * ny + (ny - 1 - iy)).reshape(-1)
        blocks.append((offset + window_perm, np.ones(self.window_size)))
        return _concatenate(blocks)

    def actor_frame(self, q_offset, qd, ang_vel_base, gravity_base, prev_action):
        return np.concatenate([q_offset, qd, ang_vel_base, gravity_base, prev_action])

    def privileged(self, lin_vel_base, height, contacts, kp_scale, kd_scale, mass_scale):
        block = np.zeros(self.privileged_dim)
        contacts = np.asarray(contacts, dtype=float)
        used = np.concatenate(
            [lin_vel_base, [height], contacts, kp_scale, kd_scale, mass_scale]
        )
        block[: len(used)] = used
        return block


def _concatenate(blocks):
    src = np.concatenate([b[0] for b in blocks]).astype(int)
    sign = np.concatenate([b[1] for b in blocks]).astype(float)
    return src, sign


def mirror_obs(obs, layout):
    """
    Reflect actor observations (a single vector or a batch along the last axis).
    """
    src, sign = layout.actor_mirror
    return np.asarray(obs)[..., src] * sign


def mirror_critic_obs(obs, layout):
    src, sign = layout.critic_mirror
    return np.asarray(obs)[..., src] * sign


def mirror_action(action, layout):
    return np.asarray(action)[..., layout.action_perm] * layout.action_sign
