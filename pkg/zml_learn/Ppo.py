"""
PPO with a multi-head value function and a reflection-symmetry regularizer.
"""

import copy

import torch
from torch import nn

from zml_util import Util

zlog = Util.get_logger(module=__name__)
detail_log = Util.get_logger(prefix=Util.DETAIL_LOGGER_PREFIX, module=__name__)

TORCH_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class NonFiniteLoss(Exception):
    pass


class TrainConfig(object):
    def __init__(
        self,
        num_envs=64,
        horizon=24,
        iterations=1500,
        gamma=0.99,
        lam=0.95,
        clip=0.2,
        epochs=5,
        minibatches=4,
        learning_rate=1e-3,
        schedule="adaptive",
        desired_kl=0.01,
        min_learning_rate=1e-5,
        max_learning_rate=1e-2,
        value_coef=1.0,
        entropy_coef=0.01,
        symmetry_weight=1.0,
        max_grad_norm=1.0,
        init_noise_std=1.0,
        actor_hidden=(512, 256, 128),
        critic_hidden=(512, 256, 128),
        vectorized=True,
        dtype="float32",
        checkpoint_interval=50,
        curriculum=None,
    ):
        if not (0.0 < gamma <= 1.0 and 0.0 < lam <= 1.0):
            raise ValueError("gamma and lam must lie in (0, 1]")
        self.num_envs = num_envs
        self.horizon = horizon
        self.iterations = iterations
        self.gamma = gamma
        self.lam = lam
        self.clip = clip
        self.epochs = epochs
        self.minibatches = minibatches
        self.learning_rate = learning_rate
        self.schedule = schedule
        self.desired_kl = desired_kl
        self.min_learning_rate = min_learning_rate
        self.max_learning_rate = max_learning_rate
        self.value_coef = value_coef
        self.entropy_coef = entropy_coef
        self.symmetry_weight = symmetry_weight
        self.max_grad_norm = max_grad_norm
        self.init_noise_std = init_noise_std
        self.actor_hidden = tuple(actor_hidden)
        self.critic_hidden = tuple(critic_hidden)
        self.vectorized = vectorized
        self.dtype = dtype
        self.checkpoint_interval = checkpoint_interval
        self.curriculum = dict(curriculum or {})

    @classmethod
    def from_config(cls, train):
        return cls(**dict(train))

    @property
    def torch_dtype(self):
        return TORCH_DTYPES[self.dtype]


def value_loss(targets, predictions):
    """
    Sum over heads of the mean squared regression error of each head.
    """
    return ((predictions - targets) ** 2).mean(dim=0).sum()


def symmetry_loss(actor_obs, critic_obs, action_mean_fn, value_total_fn, maps):
    """
    Mean over the batch of |V(G s) - V(s)|^2 + |pi(G o) - G pi(o)|^2 with V the total
    value and pi the action mean.
    """
    value_term = (value_total_fn(maps.critic(critic_obs)) - value_total_fn(critic_obs)) ** 2
    mirrored_mean = action_mean_fn(maps.actor(actor_obs))
    policy_term = ((mirrored_mean - maps.action(action_mean_fn(actor_obs))) ** 2).sum(dim=-1)
    return (value_term + policy_term).mean()


def gaussian_kl(old_mean, old_std, mean, std):
    kl = (
        torch.log(std / old_std)
        + (old_std**2 + (old_mean - mean) ** 2) / (2.0 * std**2)
        - 0.5
    )
    return kl.sum(dim=-1).mean()


def adapt_learning_rate(learning_rate, kl, config):
    if kl > 2.0 * config.desired_kl:
        return max(config.min_learning_rate, learning_rate / 1.5)
    if 0.0 < kl < 0.5 * config.desired_kl:
        return min(config.max_learning_rate, learning_rate * 1.5)
    return learning_rate


def _batch_tensors(buffer, dtype):
    names = (
        "actor_obs",
        "critic_obs",
        "actions",
        "log_probs",
        "action_means",
        "action_stds",
        "returns",
        "advantages",
    )
    return {name: torch.as_tensor(buffer.flat(name), dtype=dtype) for name in names}


def ppo_update(buffer, net, optimizer, config, maps, generator=None):
    """
    Run the PPO epochs over a filled buffer whose targets are computed.

    Returns mean statistics over minibatches. A non-finite loss restores the network
    and optimizer to their state before the update and raises NonFiniteLoss.
    """
    dtype = config.torch_dtype
    data = _batch_tensors(buffer, dtype)
    advantages = data["advantages"]
    data["advantages"] = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    net_state = copy.deepcopy(net.state_dict())
    optimizer_state = copy.deepcopy(optimizer.state_dict())

    size = data["actions"].shape[0]
    minibatch = max(1, size // config.minibatches)
    learning_rate = optimizer.param_groups[0]["lr"]
    totals = {
        "policy_loss": 0.0,
        "value_loss": 0.0,
        "symmetry_loss": 0.0,
        "entropy": 0.0,
        "kl": 0.0,
        "clip_fraction": 0.0,
    }
    updates = 0

    for epoch in range(config.epochs):
        order = torch.randperm(size, generator=generator)
        for start in range(0, size - minibatch + 1, minibatch):
            index = order[start : start + minibatch]
            batch = {name: tensor[index] for name, tensor in data.items()}

            dist = net.distribution(batch["actor_obs"])
            log_probs = dist.log_prob(batch["actions"]).sum(dim=-1)
            entropy = dist.entropy().sum(dim=-1).mean()

            with torch.no_grad():
                kl = gaussian_kl(
                    batch["action_means"], batch["action_stds"], dist.mean, dist.stddev
                ).item()
            if config.schedule == "adaptive":
                learning_rate = adapt_learning_rate(learning_rate, kl, config)
                for group in optimizer.param_groups:
                    group["lr"] = learning_rate

            ratio = torch.exp(log_probs - batch["log_probs"])
            surrogate = ratio * batch["advantages"]
            clipped = torch.clamp(ratio, 1.0 - config.clip, 1.0 + config.clip) * batch["advantages"]
            policy_loss = -torch.min(surrogate, clipped).mean()

            v_loss = value_loss(batch["returns"], net.value_heads(batch["critic_obs"]))
            if config.symmetry_weight > 0.0:
                s_loss = symmetry_loss(
                    batch["actor_obs"], batch["critic_obs"], net.action_mean, net.value_total, maps
                )
            else:
                s_loss = torch.zeros((), dtype=dtype)

            loss = (
                policy_loss
                + config.value_coef * v_loss
                + config.symmetry_weight * s_loss
                - config.entropy_coef * entropy
            )
            if not torch.isfinite(loss):
                net.load_state_dict(net_state)
                optimizer.load_state_dict(optimizer_state)
                zlog.error("Non-finite loss in epoch {}; parameters restored".format(epoch))
                raise NonFiniteLoss(
                    "Non-finite loss (policy {}, value {}, symmetry {})".format(
                        policy_loss.item(), v_loss.item(), s_loss.item()
                    )
                )

            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(net.parameters(), config.max_grad_norm)
            optimizer.step()

            with torch.no_grad():
                clip_fraction = ((ratio - 1.0).abs() > config.clip).to(dtype).mean().item()
            totals["policy_loss"] += policy_loss.item()
            totals["value_loss"] += v_loss.item()
            totals["symmetry_loss"] += s_loss.item()
            totals["entropy"] += entropy.item()
            totals["kl"] += kl
            totals["clip_fraction"] += clip_fraction
            updates += 1

    stats = {name: value / max(updates, 1) for name, value in totals.items()}
    stats["learning_rate"] = learning_rate
    detail_log.info("PPO update: {}".format(stats))
    return stats
