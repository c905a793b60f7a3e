from unittest import mock

import numpy as np
import pytest
import torch
from torch import nn

from zml_env import Observations
from zml_learn import GradCheck, Networks, Ppo, Rollout

ACTOR_DIM = 6
CRITIC_DIM = 8
N_ACTIONS = 3
N_HEADS = 2


def small_net(seed=0, n_heads=N_HEADS):
    torch.manual_seed(seed)
    return Networks.ActorCritic(
        ACTOR_DIM, CRITIC_DIM, N_ACTIONS, n_heads, (16, 16), (16, 16), 0.5
    ).double()


def reversing_maps():
    def reverse(n):
        return np.arange(n)[::-1].copy(), np.ones(n)

    return Networks.MirrorMaps(
        reverse(ACTOR_DIM), reverse(CRITIC_DIM), reverse(N_ACTIONS), torch.float64
    )


def train_config(**kwargs):
    settings = dict(
        num_envs=3,
        horizon=4,
        epochs=2,
        minibatches=2,
        learning_rate=1e-3,
        schedule="fixed",
        actor_hidden=(16, 16),
        critic_hidden=(16, 16),
        dtype="float64",
    )
    settings.update(kwargs)
    return Ppo.TrainConfig(**settings)


def filled_buffer(net, horizon=4, num_envs=3, seed=0):
    rng = np.random.default_rng(seed)
    generator = torch.Generator().manual_seed(seed)
    buffer = Rollout.RolloutBuffer(horizon, num_envs, ACTOR_DIM, CRITIC_DIM, N_ACTIONS, N_HEADS)
    for _ in range(horizon):
        actor = rng.normal(size=(num_envs, ACTOR_DIM))
        critic = rng.normal(size=(num_envs, CRITIC_DIM))
        with torch.no_grad():
            actions, log_probs, means, stds = net.act(torch.as_tensor(actor), generator)
            values = net.value_heads(torch.as_tensor(critic)).numpy()
        buffer.add(
            actor,
            critic,
            actions.numpy(),
            log_probs.numpy(),
            means.numpy(),
            stds.numpy(),
            rng.normal(size=(num_envs, N_HEADS)),
            values,
            rng.random(num_envs) < 0.2,
        )
    with torch.no_grad():
        critic = torch.as_tensor(rng.normal(size=(num_envs, CRITIC_DIM)))
        buffer.last_values = net.value_heads(critic).numpy()
    Rollout.value_targets(buffer, 0.99, 0.95)
    return buffer


def test_gae_by_hand():
    rewards = np.array([[1.0], [2.0]])
    values = np.zeros((2, 1))
    last = np.array([4.0])
    advantages = Rollout.gae(rewards, values, last, np.zeros((2, 1)), 0.5, 1.0)
    np.testing.assert_allclose(advantages, [[3.0], [4.0]])
    # An episode ending at the last step drops the bootstrap
    dones = np.array([[False], [True]])
    advantages = Rollout.gae(rewards, values, last, dones, 0.5, 1.0)
    np.testing.assert_allclose(advantages, [[2.0], [2.0]])


def test_single_head_matches_the_scalar_stream():
    rng = np.random.default_rng(0)
    rewards = rng.normal(size=(6, 4))
    values = rng.normal(size=(6, 4))
    last = rng.normal(size=4)
    dones = rng.random((6, 4)) < 0.3
    scalar = Rollout.gae(rewards, values, last, dones, 0.99, 0.95)
    headed = Rollout.gae(rewards[..., None], values[..., None], last[:, None], dones, 0.99, 0.95)
    np.testing.assert_allclose(headed[..., 0], scalar)


def test_advantage_of_the_aggregated_stream():
    net = small_net()
    buffer = filled_buffer(net)
    returns, advantages = buffer.returns, buffer.advantages
    assert returns.shape == (4, 3, N_HEADS)
    assert advantages.shape == (4, 3)
    head_advantages = returns - buffer.values
    # Advantage estimation is linear in the reward and value streams
    np.testing.assert_allclose(head_advantages.sum(axis=-1), advantages, atol=1e-12)
    expected = Rollout.gae(
        buffer.rewards.sum(axis=-1),
        buffer.values.sum(axis=-1),
        buffer.last_values.sum(axis=-1),
        buffer.dones,
        0.99,
        0.95,
    )
    np.testing.assert_allclose(advantages, expected)


def test_buffer_overflow():
    buffer = Rollout.RolloutBuffer(1, 1, 2, 2, 1, 1)
    row = (np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 1)), np.zeros(1))
    buffer.add(*row, np.zeros((1, 1)), np.ones((1, 1)), np.zeros(1), np.zeros((1, 1)), [False])
    assert buffer.full
    with pytest.raises(IndexError, match="overflow"):
        buffer.add(
            *row, np.zeros((1, 1)), np.ones((1, 1)), np.zeros(1), np.zeros((1, 1)), [False]
        )
    buffer.clear()
    assert not buffer.full and buffer.returns is None


def test_value_loss_sums_per_head_errors():
    targets = torch.zeros(2, 2)
    predictions = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
    assert Ppo.value_loss(targets, predictions).item() == pytest.approx(15.0)


def test_symmetry_loss_vanishes_for_equivariant_functions():
    src = np.array([1, 0, 2])
    sign = np.array([1.0, 1.0, -1.0])
    maps = Networks.MirrorMaps((src, sign), (src, sign), (src, sign), torch.float64)
    obs = torch.as_tensor(np.random.default_rng(0).normal(size=(5, 3)))

    def value_total(x):
        return (x**2).sum(dim=-1)

    loss = Ppo.symmetry_loss(obs, obs, lambda x: x, value_total, maps)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)

    offset = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    loss = Ppo.symmetry_loss(obs, obs, lambda x: x + offset, value_total, maps)
    # c - G c = (1, -1, 0)
    assert loss.item() == pytest.approx(2.0)


def test_train_config_rejects_bad_discounts():
    with pytest.raises(ValueError, match="must lie in"):
        Ppo.TrainConfig(gamma=0.0)
    with pytest.raises(ValueError, match="must lie in"):
        Ppo.TrainConfig(lam=1.5)


@pytest.mark.parametrize(
    "kl,expected",
    [(0.05, 1e-3 / 1.5), (0.001, 1.5e-3), (0.01, 1e-3), (0.0, 1e-3)],
)
def test_adaptive_learning_rate(kl, expected):
    assert Ppo.adapt_learning_rate(1e-3, kl, train_config()) == pytest.approx(expected)


def test_adaptive_learning_rate_bounds():
    config = train_config()
    assert Ppo.adapt_learning_rate(1e-5, 1.0, config) == config.min_learning_rate
    assert Ppo.adapt_learning_rate(1e-2, 1e-5, config) == config.max_learning_rate


def test_ppo_update_moves_the_parameters():
    net = small_net()
    buffer = filled_buffer(net)
    before = [p.detach().clone() for p in net.parameters()]
    optimizer = torch.optim.Adam(net.parameters(), lr=1e-3)
    stats = Ppo.ppo_update(
        buffer, net, optimizer, train_config(), reversing_maps(), torch.Generator().manual_seed(0)
    )
    assert set(stats) == set(
        ("policy_loss", "value_loss", "symmetry_loss", "entropy", "kl", "clip_fraction")
    ) | {"learning_rate"}
    assert all(np.isfinite(value) for value in stats.values())
    assert stats["symmetry_loss"] > 0.0
    assert any(not torch.equal(a, b) for a, b in zip(before, net.parameters()))


def test_symmetry_weight_zero_skips_the_term():
    net = small_net()
    optimizer = torch.optim.Adam(net.parameters(), lr=1e-3)
    stats = Ppo.ppo_update(
        filled_buffer(net), net, optimizer, train_config(symmetry_weight=0.0), reversing_maps()
    )
    assert stats["symmetry_loss"] == 0.0


def test_ppo_update_is_deterministic():
    results = []
    for _ in range(2):
        net = small_net(seed=3)
        optimizer = torch.optim.Adam(net.parameters(), lr=1e-3)
        Ppo.ppo_update(
            filled_buffer(net, seed=1),
            net,
            optimizer,
            train_config(),
            reversing_maps(),
            torch.Generator().manual_seed(7),
        )
        results.append([p.detach().clone() for p in net.parameters()])
    for a, b in zip(*results):
        assert torch.equal(a, b)


@mock.patch("zml_learn.Ppo.zlog.error")
def test_non_finite_loss_restores_the_state(mocked_error):
    net = small_net()
    buffer = filled_buffer(net)
    buffer.returns[0, 0, 0] = np.nan
    optimizer = torch.optim.Adam(net.parameters(), lr=1e-3)
    before = {name: t.clone() for name, t in net.state_dict().items()}
    with pytest.raises(Ppo.NonFiniteLoss, match="Non-finite loss"):
        Ppo.ppo_update(buffer, net, optimizer, train_config(minibatches=1), reversing_maps())
    for name, tensor in net.state_dict().items():
        assert torch.equal(tensor, before[name])
    assert optimizer.state_dict()["state"] == {}
    assert "parameters restored" in mocked_error.call_args[0][0]


def test_normalization_matches_the_batch_statistics():
    rng = np.random.default_rng(0)
    data = torch.as_tensor(rng.normal(3.0, 2.0, size=(400, 4)))
    normalizer = Networks.EmpiricalNormalization(4).double()
    normalizer.update(data[:150])
    normalizer.update(data[150:])
    assert int(normalizer.count) == 400
    np.testing.assert_allclose(normalizer.mean.numpy(), data.mean(dim=0).numpy())
    np.testing.assert_allclose(normalizer.var.numpy(), data.var(dim=0, unbiased=False).numpy())


def test_normalization_frozen_and_eval_mode():
    data = torch.ones(10, 2) * 5.0
    normalizer = Networks.EmpiricalNormalization(2)
    normalizer.eval()
    normalizer.update(data)
    assert int(normalizer.count) == 0
    normalizer.train()
    normalizer.frozen = True
    normalizer.update(data)
    assert int(normalizer.count) == 0
    np.testing.assert_allclose(normalizer(data).numpy(), 5.0 / (1.0 + 1e-2), rtol=1e-6)


def test_normalization_stops_after_until():
    normalizer = Networks.EmpiricalNormalization(1, until=10)
    normalizer.update(torch.zeros(10, 1))
    normalizer.update(torch.ones(10, 1))
    assert int(normalizer.count) == 10
    assert normalizer.mean.item() == 0.0


def test_actor_critic_shapes():
    net = small_net()
    actor = torch.zeros(5, ACTOR_DIM, dtype=torch.float64)
    critic = torch.zeros(5, CRITIC_DIM, dtype=torch.float64)
    actions, log_probs, means, stds = net.act(actor, torch.Generator().manual_seed(0))
    assert actions.shape == (5, N_ACTIONS) and log_probs.shape == (5,)
    np.testing.assert_allclose(stds.numpy(), 0.5)
    assert net.value_heads(critic).shape == (5, N_HEADS)
    torch.testing.assert_close(net.value_total(critic), net.value_heads(critic).sum(dim=-1))


def test_mirror_maps_from_a_layout(biped):
    layout = Observations.ObservationLayout(biped, biped.control_joint_indices("all"), 4, 70)
    maps = Networks.MirrorMaps.from_layout(layout, torch.float64)
    obs = torch.as_tensor(np.random.default_rng(0).normal(size=(2, layout.actor_dim)))
    np.testing.assert_allclose(
        maps.actor(obs).numpy(), Observations.mirror_obs(obs.numpy(), layout)
    )
    np.testing.assert_allclose(maps.actor(maps.actor(obs)).numpy(), obs.numpy())


def _squared_output(net, batch):
    return (net(batch) ** 2).mean()


def test_grad_check_on_a_linear_layer():
    torch.manual_seed(0)
    net = nn.Linear(3, 2).double()
    batch = torch.randn(4, 3, dtype=torch.float64)
    assert GradCheck.grad_check(net, _squared_output, batch) < 1e-6


def test_grad_check_on_an_mlp():
    torch.manual_seed(1)
    net = Networks.mlp(4, (8, 8), 2, activation=nn.Tanh).double()
    batch = torch.randn(5, 4, dtype=torch.float64)
    assert GradCheck.grad_check(net, _squared_output, batch) < 1e-4


def test_grad_check_flags_wrong_gradients():
    torch.manual_seed(2)
    net = Networks.mlp(4, (8,), 2, activation=nn.Tanh).double()
    batch = torch.randn(5, 4, dtype=torch.float64)
    gradients = GradCheck.analytic_gradients(net, _squared_output, batch)
    corrupted = [g * 1.5 for g in gradients]
    assert GradCheck.grad_check(net, _squared_output, batch, gradients=corrupted) > 1e-2


def test_grad_check_on_the_value_loss():
    torch.manual_seed(3)
    net = Networks.ValueNet(4, 3, (8,)).double()
    batch = (torch.randn(6, 4, dtype=torch.float64), torch.randn(6, 3, dtype=torch.float64))

    def loss_fn(net, batch):
        obs, targets = batch
        return Ppo.value_loss(targets, net(obs))

    assert GradCheck.grad_check(net, loss_fn, batch) < 1e-4


def test_grad_check_through_policy_and_symmetry_paths():
    net = small_net(seed=4)
    rng = np.random.default_rng(4)
    batch = {
        "actor": torch.as_tensor(rng.normal(size=(6, ACTOR_DIM))),
        "critic": torch.as_tensor(rng.normal(size=(6, CRITIC_DIM))),
        "actions": torch.as_tensor(rng.normal(size=(6, N_ACTIONS))),
        "advantages": torch.as_tensor(rng.normal(size=6)),
    }
    maps = reversing_maps()

    def loss_fn(net, batch):
        log_probs = net.distribution(batch["actor"]).log_prob(batch["actions"]).sum(dim=-1)
        policy = -(log_probs * batch["advantages"]).mean()
        symmetry = Ppo.symmetry_loss(
            batch["actor"], batch["critic"], net.action_mean, net.value_total, maps
        )
        return policy + symmetry

    assert GradCheck.grad_check(net, loss_fn, batch) < 1e-4
