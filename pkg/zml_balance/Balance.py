"""
Zero-Moment-Point / Zero-Moment-Line mathematics and the two balance rewards.
"""

import numpy as np

from zml_util import Util

zlog = Util.get_logger(module=__name__)

GRAVITY = 9.81

# Relative guard on the ZMP denominator M g + dP_z/dt
DEGENERATE_TOLERANCE = 1e-6

DEFAULT_EPSILON = 1e-6
ZMP_REWARD_SCALE = 0.05
ANGULAR_MOMENTUM_REWARD_SCALE = 5.0

# Heights at which the line of ZMPs is sampled
ZML_HEIGHTS = (0.0, 1.0)


class DegenerateDenominator(Exception):
    pass


class DegenerateZml(Exception):
    pass


class ZmlLine(object):
    """
    The line traced by ZMPs evaluated at different plane heights.

    `anchor` is the ZMP at height 0; `direction` is a unit vector along the line.
    """

    def __init__(self, anchor, direction, degenerate=False):
        self.anchor = np.asarray(anchor, dtype=float)
        self.direction = np.asarray(direction, dtype=float)
        self.degenerate = bool(degenerate)

    @classmethod
    def degenerate_line(cls):
        return cls(np.full(3, np.nan), np.array([0.0, 0.0, 1.0]), degenerate=True)

    @property
    def is_vertical(self):
        return bool(np.hypot(self.direction[0], self.direction[1]) < 1e-12)

    def point_at(self, z):
        if self.degenerate:
            raise DegenerateZml("Degenerate ZML has no point at height {}".format(z))
        t = (z - self.anchor[2]) / self.direction[2]
        return self.anchor + t * self.direction


class SupportCenter(object):
    def __init__(self, point, contact_count, epsilon):
        self.point = np.asarray(point, dtype=float)
        self.contact_count = int(contact_count)
        self.epsilon = epsilon


def zmp_at_height(total_mass, com, pdot, ldot, z, gravity=GRAVITY):
    """
    Horizontal ZMP coordinates on the plane at height z.
    """
    weight = total_mass * gravity
    denominator = weight + pdot[2]
    if abs(denominator) <= DEGENERATE_TOLERANCE * weight:
        raise DegenerateDenominator(
            "ZMP denominator {:.3e} vanishes (near free fall)".format(denominator)
        )
    x = (weight * com[0] + z * pdot[0] - ldot[1]) / denominator
    y = (weight * com[1] + z * pdot[1] + ldot[0]) / denominator
    return x, y


def compute_zml(momentum, gravity=GRAVITY):
    """
    Line of ZMPs for a momentum state carrying rates (pdot, ldot).
    """
    M, com, pdot, ldot = momentum.total_mass, momentum.com, momentum.pdot, momentum.ldot
    try:
        x0, y0 = zmp_at_height(M, com, pdot, ldot, ZML_HEIGHTS[0], gravity)
        x1, y1 = zmp_at_height(M, com, pdot, ldot, ZML_HEIGHTS[1], gravity)
    except DegenerateDenominator:
        zlog.debug("ZML degenerate for pdot={}".format(pdot))
        return ZmlLine.degenerate_line()

    anchor = np.array([x0, y0, ZML_HEIGHTS[0]])
    direction = np.array([x1 - x0, y1 - y0, ZML_HEIGHTS[1] - ZML_HEIGHTS[0]])
    return ZmlLine(anchor, direction / np.linalg.norm(direction))


def support_center(
    left, right, left_force, right_force, epsilon=DEFAULT_EPSILON, force_threshold=0.0
):
    """
    Contact-weighted center of the two sole centers. A foot counts as supporting when
    its force norm exceeds `force_threshold`.
    """
    if epsilon <= 0.0:
        raise ValueError("Support center epsilon must be positive, got {}".format(epsilon))
    left, right = np.asarray(left, dtype=float), np.asarray(right, dtype=float)
    c_left = 1.0 if np.linalg.norm(left_force) > force_threshold else 0.0
    c_right = 1.0 if np.linalg.norm(right_force) > force_threshold else 0.0
    point = (left * (c_left + epsilon) + right * (c_right + epsilon)) / (
        c_left + c_right + 2.0 * epsilon
    )
    return SupportCenter(point, int(c_left + c_right), epsilon)


def zmp_distance(csp, zml):
    """
    Horizontal distance from the support center to the ZML projected on the ground plane.
    """
    if zml.degenerate:
        raise DegenerateZml("ZMP distance is undefined on a degenerate ZML")
    point = csp.point[:2] - zml.anchor[:2]
    horizontal = zml.direction[:2]
    norm = np.linalg.norm(horizontal)
    if norm < 1e-12:
        return float(np.linalg.norm(point))
    unit = horizontal / norm
    return float(abs(point[0] * unit[1] - point[1] * unit[0]))


def reward_zmp(distance, scale=ZMP_REWARD_SCALE):
    return float(np.exp(-distance / scale))


def reward_angular_momentum(angular_base, scale=ANGULAR_MOMENTUM_REWARD_SCALE):
    return float(np.exp(-np.linalg.norm(angular_base) / scale))


def zmp_reward_or_flight(csp, zml, scale=ZMP_REWARD_SCALE):
    """
    (distance, reward) for one step. Without support or on a degenerate line the
    distance is NaN and the reward is 0.
    """
    if csp.contact_count == 0 or zml.degenerate:
        return float("nan"), 0.0
    distance = zmp_distance(csp, zml)
    return distance, reward_zmp(distance, scale)
