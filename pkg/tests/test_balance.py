import math
from unittest import mock

import numpy as np
import pytest

from zml_balance import Balance
from zml_dynamics import Dynamics
from zml_terrain import Terrain

MASS = 24.0
G = 9.81


def momentum(com, pdot, ldot, mass=MASS):
    com = np.asarray(com, dtype=float)
    state = Dynamics.MomentumState(mass, com, np.zeros(3), np.zeros(3), np.zeros(3))
    return state.with_rates(np.asarray(pdot, dtype=float), np.asarray(ldot, dtype=float))


def moment_about(point, com, pdot, ldot, mass=MASS):
    """
    Net moment of the contact wrench about `point`, from dL/dt = p x Mg + tau.
    """
    weight = np.array([0.0, 0.0, -mass * G])
    force = np.asarray(pdot) - weight
    tau = np.asarray(ldot) - np.cross(com, weight)
    return tau - np.cross(point, force)


@pytest.mark.parametrize(
    "com,pdot,ldot",
    [
        ([0.1, -0.05, 0.6], [3.0, -2.0, 10.0], [1.0, 2.0, 0.5]),
        ([0.0, 0.0, 0.7], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
        ([-0.2, 0.3, 0.5], [-20.0, 5.0, -40.0], [-3.0, 0.4, 2.0]),
    ],
)
@pytest.mark.parametrize("z", [0.0, 0.35, 1.0])
def test_zmp_has_no_horizontal_moment(com, pdot, ldot, z):
    x, y = Balance.zmp_at_height(MASS, np.array(com), np.array(pdot), np.array(ldot), z)
    residual = moment_about(np.array([x, y, z]), com, pdot, ldot)
    np.testing.assert_allclose(residual[:2], np.zeros(2), atol=1e-9)


def test_zml_contains_zmps_at_every_height():
    state = momentum([0.1, -0.05, 0.6], [3.0, -2.0, 10.0], [1.0, 2.0, 0.5])
    line = Balance.compute_zml(state)
    assert not line.degenerate
    assert np.linalg.norm(line.direction) == pytest.approx(1.0)
    for z in (-0.5, 0.2, 0.8, 2.0):
        x, y = Balance.zmp_at_height(MASS, state.com, state.pdot, state.ldot, z)
        np.testing.assert_allclose(line.point_at(z), [x, y, z], atol=1e-12)


def test_static_zml_is_the_vertical_through_the_com():
    line = Balance.compute_zml(momentum([0.12, -0.03, 0.6], np.zeros(3), np.zeros(3)))
    assert line.is_vertical
    np.testing.assert_allclose(line.anchor, [0.12, -0.03, 0.0])


@mock.patch("zml_balance.Balance.zlog.debug")
def test_free_fall_gives_a_degenerate_line(mocked_debug):
    line = Balance.compute_zml(momentum([0.0, 0.0, 1.0], [0.0, 0.0, -MASS * G], np.zeros(3)))
    assert line.degenerate
    assert mocked_debug.called
    with pytest.raises(Balance.DegenerateZml):
        line.point_at(0.0)
    with pytest.raises(Balance.DegenerateDenominator):
        Balance.zmp_at_height(MASS, np.zeros(3), np.array([0.0, 0.0, -MASS * G]), np.zeros(3), 0)


@pytest.mark.parametrize(
    "left_force,right_force,expected",
    [
        ([0, 0, 100], [0, 0, 100], [0.1, 0.0, 0.0]),
        ([0, 0, 100], [0, 0, 0], [0.0, 0.1, 0.0]),
        ([0, 0, 0], [0, 0, 100], [0.2, -0.1, 0.0]),
        ([0, 0, 0], [0, 0, 0], [0.1, 0.0, 0.0]),
    ],
)
def test_support_center_weights_feet_in_contact(left_force, right_force, expected):
    left, right = np.array([0.0, 0.1, 0.0]), np.array([0.2, -0.1, 0.0])
    csp = Balance.support_center(left, right, left_force, right_force, epsilon=1e-9)
    np.testing.assert_allclose(csp.point, expected, atol=1e-6)


def test_support_center_lies_between_the_feet():
    rng = np.random.default_rng(0)
    for _ in range(50):
        left, right = rng.normal(size=3), rng.normal(size=3)
        forces = rng.choice([0.0, 50.0], size=2)
        epsilon = 10.0 ** rng.uniform(-6, 0)
        csp = Balance.support_center(left, right, [0, 0, forces[0]], [0, 0, forces[1]], epsilon)
        span = right - left
        t = np.dot(csp.point - left, span) / np.dot(span, span)
        assert -1e-12 <= t <= 1.0 + 1e-12
        np.testing.assert_allclose(csp.point, left + t * span, atol=1e-9)


def test_support_center_threshold_and_epsilon():
    csp = Balance.support_center(
        [0.0, 0.1, 0.0], [0.0, -0.1, 0.0], [0, 0, 0.5], [0, 0, 5.0], force_threshold=1.0
    )
    assert csp.contact_count == 1
    with pytest.raises(ValueError, match="epsilon must be positive"):
        Balance.support_center(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), epsilon=0.0)


def test_distance_to_vertical_line_is_planar():
    line = Balance.ZmlLine([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    csp = Balance.SupportCenter([0.03, 0.04, 0.2], 2, 1e-6)
    assert Balance.zmp_distance(csp, line) == pytest.approx(0.05)


def test_distance_to_tilted_line_uses_the_ground_projection():
    direction = np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0)
    line = Balance.ZmlLine([0.0, 0.0, 0.0], direction)
    csp = Balance.SupportCenter([0.5, -0.02, 0.0], 2, 1e-6)
    # The projection is the x axis; only the lateral offset counts
    assert Balance.zmp_distance(csp, line) == pytest.approx(0.02)


def test_rewards():
    assert Balance.reward_zmp(0.0) == 1.0
    assert Balance.reward_zmp(0.05) == pytest.approx(math.exp(-1.0))
    assert Balance.reward_angular_momentum(np.zeros(3)) == 1.0
    assert Balance.reward_angular_momentum([3.0, 4.0, 0.0]) == pytest.approx(math.exp(-1.0))


def test_flight_yields_nan_distance_and_zero_reward():
    line = Balance.ZmlLine([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    airborne = Balance.SupportCenter([0.0, 0.0, 0.0], 0, 1e-6)
    distance, reward = Balance.zmp_reward_or_flight(airborne, line)
    assert math.isnan(distance)
    assert reward == 0.0

    supported = Balance.SupportCenter([0.0, 0.05, 0.0], 1, 1e-6)
    distance, reward = Balance.zmp_reward_or_flight(supported, Balance.ZmlLine.degenerate_line())
    assert math.isnan(distance)
    assert reward == 0.0

    distance, reward = Balance.zmp_reward_or_flight(supported, line)
    assert distance == pytest.approx(0.05)
    assert reward == pytest.approx(math.exp(-1.0))


def test_standing_robot_zmp_lies_under_the_feet(biped):
    height = Dynamics.nominal_base_height(biped)
    state = Dynamics.SimState.at_rest(biped, base_pos=(0.0, 0.0, height - 1e-3))
    _, hf = Terrain.generate_terrain("plane", 0, np.random.default_rng(0))
    contacts = Dynamics.evaluate_contacts(biped, state, hf)
    mom = Dynamics.compute_momentum(biped, state)
    pdot, ldot = Dynamics.momentum_rates(biped, state, contacts, momentum=mom)
    line = Balance.compute_zml(mom.with_rates(pdot, ldot))
    kin = Dynamics.forward_kinematics(biped, state)
    left, right = Dynamics.foot_sole_centers(biped, kin)
    forces = contacts.foot_force_sums
    csp = Balance.support_center(left, right, forces[0], forces[1])
    distance = Balance.zmp_distance(csp, line)
    # The contact pressure center sits at the mean of the sole points
    assert distance < 0.03
