"""
Rollout storage with vector rewards and per-head values.
"""

import numpy as np


class RolloutBuffer(object):
    """
    Fixed-capacity (horizon x num_envs) transition store. Rewards and values keep one
    column per value head; nothing is summed before `value_targets`.
    """

    def __init__(self, horizon, num_envs, actor_dim, critic_dim, n_actions, n_heads):
        self.horizon = horizon
        self.num_envs = num_envs
        self.n_heads = n_heads
        shape = (horizon, num_envs)
        self.actor_obs = np.zeros(shape + (actor_dim,))
        self.critic_obs = np.zeros(shape + (critic_dim,))
        self.actions = np.zeros(shape + (n_actions,))
        self.log_probs = np.zeros(shape)
        self.action_means = np.zeros(shape + (n_actions,))
        self.action_stds = np.zeros(shape + (n_actions,))
        self.rewards = np.zeros(shape + (n_heads,))
        self.values = np.zeros(shape + (n_heads,))
        self.dones = np.zeros(shape, dtype=bool)
        self.last_values = np.zeros((num_envs, n_heads))
        self.returns = None
        self.advantages = None
        self.step = 0

    @property
    def full(self):
        return self.step == self.horizon

    def add(self, actor_obs, critic_obs, actions, log_probs, means, stds, rewards, values, dones):
        if self.full:
            raise IndexError("Rollout buffer overflow")
        t = self.step
        self.actor_obs[t] = actor_obs
        self.critic_obs[t] = critic_obs
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.action_means[t] = means
        self.action_stds[t] = stds
        self.rewards[t] = np.asarray(rewards).reshape(self.num_envs, self.n_heads)
        self.values[t] = values
        self.dones[t] = dones
        self.step += 1

    def clear(self):
        self.step = 0
        self.returns = None
        self.advantages = None

    def flat(self, name):
        array = getattr(self, name)
        return array.reshape((-1,) + array.shape[2:])


def gae(rewards, values, last_values, dones, gamma, lam):
    """
    Generalized advantage estimation over the leading time axis. Works for scalar
    streams (T, N) and per-head streams (T, N, K); a done flag zeroes the bootstrap.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    advantages = np.zeros_like(rewards)
    not_done = 1.0 - np.asarray(dones, dtype=float)
    if rewards.ndim == 3:
        not_done = not_done[..., None]
    running = np.zeros_like(rewards[0])
    next_values = np.asarray(last_values, dtype=float)
    for t in reversed(range(rewards.shape[0])):
        delta = rewards[t] + gamma * next_values * not_done[t] - values[t]
        running = delta + gamma * lam * not_done[t] * running
        advantages[t] = running
        next_values = values[t]
    return advantages


def value_targets(buffer, gamma, lam):
    """
    Per-head TD(lambda) targets and the advantage of the aggregated stream.

    Each head regresses onto its own return; advantages come from the summed reward
    and the summed value, which makes the result independent of how the reward is
    split into terms.
    """
    head_advantages = gae(
        buffer.rewards, buffer.values, buffer.last_values, buffer.dones, gamma, lam
    )
    buffer.returns = head_advantages + buffer.values
    buffer.advantages = gae(
        buffer.rewards.sum(axis=-1),
        buffer.values.sum(axis=-1),
        buffer.last_values.sum(axis=-1),
        buffer.dones,
        gamma,
        lam,
    )
    return buffer.returns, buffer.advantages
