"""
Actor and multi-head critic networks with running observation normalization.
"""

import math

import numpy as np
import torch
from torch import nn
from torch.distributions import Normal

from zml_util import Util

zlog = Util.get_logger(module=__name__)

DEFAULT_HIDDEN = (512, 256, 128)
NORMALIZER_EPSILON = 1e-2


def mlp(input_dim, hidden, output_dim=None, activation=nn.ELU):
    """
    Fully connected stack. Without `output_dim` the stack ends on the last hidden
    activation.
    """
    layers = []
    width = input_dim
    for size in hidden:
        layers.append(nn.Linear(width, size))
        layers.append(activation())
        width = size
    if output_dim is not None:
        layers.append(nn.Linear(width, output_dim))
    return nn.Sequential(*layers)


class EmpiricalNormalization(nn.Module):
    """
    Running mean and variance of observations. Statistics only move while the module
    is in training mode and not frozen.
    """

    def __init__(self, shape, epsilon=NORMALIZER_EPSILON, until=None):
        super(EmpiricalNormalization, self).__init__()
        self.epsilon = epsilon
        self.until = until
        self.register_buffer("mean", torch.zeros(shape))
        self.register_buffer("var", torch.ones(shape))
        self.register_buffer("count", torch.zeros((), dtype=torch.long))
        self.frozen = False

    @property
    def std(self):
        return torch.sqrt(self.var)

    def forward(self, x):
        return (x - self.mean) / (self.std + self.epsilon)

    @torch.no_grad()
    def update(self, x):
        if self.frozen or not self.training:
            return
        if self.until is not None and self.count >= self.until:
            return
        batch = x.reshape(-1, x.shape[-1])
        count = batch.shape[0]
        rate = count / float(int(self.count) + count)
        batch_mean = batch.mean(dim=0)
        batch_var = batch.var(dim=0, unbiased=False)
        delta = batch_mean - self.mean
        self.mean += rate * delta
        self.var += rate * (batch_var - self.var + delta * (batch_mean - self.mean))
        self.count += count


class PolicyNet(nn.Module):
    """
    Diagonal Gaussian policy: MLP action mean with a state-independent log-std.
    """

    def __init__(self, obs_dim, n_actions, hidden=DEFAULT_HIDDEN, init_noise_std=1.0):
        super(PolicyNet, self).__init__()
        self.body = mlp(obs_dim, hidden, n_actions)
        self.log_std = nn.Parameter(torch.full((n_actions,), math.log(init_noise_std)))

    def forward(self, obs):
        return self.body(obs)

    def distribution(self, obs):
        mean = self.forward(obs)
        return Normal(mean, torch.exp(self.log_std).expand_as(mean))


class ValueNet(nn.Module):
    """
    Shared trunk with one linear head per reward term. The total value is the sum of
    the heads.
    """

    def __init__(self, obs_dim, n_heads, hidden=DEFAULT_HIDDEN):
        super(ValueNet, self).__init__()
        self.n_heads = n_heads
        self.trunk = mlp(obs_dim, hidden)
        self.heads = nn.Linear(hidden[-1] if hidden else obs_dim, n_heads)

    def forward(self, obs):
        return self.heads(self.trunk(obs))

    def total(self, obs):
        return self.forward(obs).sum(dim=-1)


class ActorCritic(nn.Module):
    """
    Normalizers, policy and value network. All public methods take raw observations.
    """

    def __init__(
        self,
        actor_dim,
        critic_dim,
        n_actions,
        n_heads,
        actor_hidden=DEFAULT_HIDDEN,
        critic_hidden=DEFAULT_HIDDEN,
        init_noise_std=1.0,
    ):
        super(ActorCritic, self).__init__()
        self.actor_dim = actor_dim
        self.critic_dim = critic_dim
        self.n_actions = n_actions
        self.n_heads = n_heads
        self.actor_normalizer = EmpiricalNormalization(actor_dim)
        self.critic_normalizer = EmpiricalNormalization(critic_dim)
        self.policy = PolicyNet(actor_dim, n_actions, actor_hidden, init_noise_std)
        self.value = ValueNet(critic_dim, n_heads, critic_hidden)

    def update_normalization(self, actor_obs, critic_obs):
        self.actor_normalizer.update(actor_obs)
        self.critic_normalizer.update(critic_obs)

    def freeze_normalization(self):
        self.actor_normalizer.frozen = True
        self.critic_normalizer.frozen = True

    def distribution(self, actor_obs):
        return self.policy.distribution(self.actor_normalizer(actor_obs))

    def action_mean(self, actor_obs):
        return self.policy(self.actor_normalizer(actor_obs))

    def act(self, actor_obs, generator=None):
        """
        Sample actions; returns (actions, log-probs, means, stds).
        """
        dist = self.distribution(actor_obs)
        noise = torch.randn(
            dist.mean.shape, generator=generator, dtype=dist.mean.dtype, device=dist.mean.device
        )
        actions = dist.mean + dist.stddev * noise
        return actions, dist.log_prob(actions).sum(dim=-1), dist.mean, dist.stddev

    def value_heads(self, critic_obs):
        return self.value(self.critic_normalizer(critic_obs))

    def value_total(self, critic_obs):
        return self.value_heads(critic_obs).sum(dim=-1)


class MirrorMaps(object):
    """
    Signed permutations reflecting actor observations, critic observations and actions,
    as torch tensors: mirrored = x[..., src] * sign.
    """

    def __init__(self, actor, critic, action, dtype=torch.float32):
        self.actor_src, self.actor_sign = _as_torch(actor, dtype)
        self.critic_src, self.critic_sign = _as_torch(critic, dtype)
        self.action_src, self.action_sign = _as_torch(action, dtype)

    @classmethod
    def from_layout(cls, layout, dtype=torch.float32):
        return cls(
            layout.actor_mirror,
            layout.critic_mirror,
            (layout.action_perm, layout.action_sign),
            dtype,
        )

    def actor(self, obs):
        return obs[..., self.actor_src] * self.actor_sign

    def critic(self, obs):
        return obs[..., self.critic_src] * self.critic_sign

    def action(self, action):
        return action[..., self.action_src] * self.action_sign


def _as_torch(pair, dtype):
    src, sign = pair
    return (
        torch.as_tensor(np.asarray(src), dtype=torch.long),
        torch.as_tensor(np.asarray(sign), dtype=dtype),
    )


def build_actor_critic(layout, n_heads, train_config, dtype=torch.float32):
    net = ActorCritic(
        layout.actor_dim,
        layout.critic_dim,
        layout.n_actions,
        n_heads,
        tuple(train_config.actor_hidden),
        tuple(train_config.critic_hidden),
        train_config.init_noise_std,
    )
    zlog.info(
        "Actor-critic: actor {} -> {}, critic {} -> {} heads".format(
            layout.actor_dim, layout.n_actions, layout.critic_dim, n_heads
        )
    )
    return net.to(dtype)
