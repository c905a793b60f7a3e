"""
Per-episode domain randomization, push scheduling, torque perturbations and
multiplicative action noise.
"""

import numpy as np

from zml_util import Util

zlog = Util.get_logger(module=__name__)


class RandomizationDraw(object):
    """
    Physical parameters drawn once per episode. `rfi_scale` sets the magnitude of the
    per-step torque perturbation; `friction` of None keeps the terrain friction.
    """

    def __init__(
        self,
        friction=None,
        kp_scale=None,
        kd_scale=None,
        link_mass_scale=None,
        load_mass=0.0,
        base_com_offset=None,
        action_delay=0.0,
        rfi_scale=0.0,
        action_noise=0.0,
    ):
        self.friction = friction
        self.kp_scale = kp_scale
        self.kd_scale = kd_scale
        self.link_mass_scale = link_mass_scale
        self.load_mass = float(load_mass)
        self.base_com_offset = np.zeros(3) if base_com_offset is None else base_com_offset
        self.action_delay = float(action_delay)
        self.rfi_scale = float(rfi_scale)
        self.action_noise = float(action_noise)

    @classmethod
    def nominal(cls, model, action_noise=0.0):
        return cls(
            kp_scale=np.ones(model.n_dof),
            kd_scale=np.ones(model.n_dof),
            link_mass_scale=np.ones(model.n_links),
            action_noise=action_noise,
        )

    def apply(self, model):
        """
        Randomized copy of the model.
        """
        return model.scaled(
            link_mass_scale=self.link_mass_scale,
            load_mass=self.load_mass,
            base_com_offset=self.base_com_offset,
            kp_scale=self.kp_scale,
            kd_scale=self.kd_scale,
        )

    def to_dict(self):
        return {
            "friction": None if self.friction is None else float(self.friction),
            "kp_scale": np.round(self.kp_scale, 6).tolist(),
            "kd_scale": np.round(self.kd_scale, 6).tolist(),
            "link_mass_scale": np.round(self.link_mass_scale, 6).tolist(),
            "load_mass": round(self.load_mass, 6),
            "base_com_offset": np.round(self.base_com_offset, 6).tolist(),
            "action_delay": round(self.action_delay, 6),
            "rfi_scale": round(self.rfi_scale, 6),
            "action_noise": self.action_noise,
        }


def draw_randomization(model, settings, rng):
    """
    Draw an episode's parameters from the `randomization` config section.
    """
    if not settings["enabled"]:
        return RandomizationDraw.nominal(model, action_noise=settings["action_noise"])

    def uniform(bounds, size=None):
        return rng.uniform(bounds[0], bounds[1], size=size)

    rfi = settings["torque_rfi"]
    return RandomizationDraw(
        friction=float(uniform(settings["friction"])),
        kp_scale=uniform(settings["kp_scale"], model.n_dof),
        kd_scale=uniform(settings["kd_scale"], model.n_dof),
        link_mass_scale=uniform(settings["link_mass_scale"], model.n_links),
        load_mass=float(uniform(settings["load_mass"])),
        base_com_offset=uniform(settings["base_com_offset"], 3),
        action_delay=float(uniform(settings["action_delay"])),
        rfi_scale=float(uniform(rfi["scale"])) if rfi["enabled"] else 0.0,
        action_noise=settings["action_noise"],
    )


def sample_push_interval(rng, mean_interval):
    return float(rng.exponential(mean_interval))


def draw_push(rng, max_lin_vel, max_ang_vel):
    """
    Base velocity deltas for one push: horizontal linear and 3-axis angular.
    """
    lin = np.zeros(3)
    lin[:2] = rng.uniform(-max_lin_vel, max_lin_vel, size=2)
    ang = rng.uniform(-max_ang_vel, max_ang_vel, size=3)
    return lin, ang


def rfi_torques(torque_limit, rfi_scale, magnitude, rng):
    """
    Per-step random force injection: U(-magnitude, magnitude) * rfi_scale * torque limit.
    """
    return rng.uniform(-magnitude, magnitude, size=len(torque_limit)) * rfi_scale * torque_limit


def apply_action_noise(action, sigma, rng):
    """
    Multiplicative action noise a * (1 + sigma * eps), eps ~ N(0, I).
    """
    action = np.asarray(action, dtype=float)
    if sigma < 0.0:
        raise ValueError("Action noise sigma must be non-negative, got {}".format(sigma))
    if sigma == 0.0:
        return action.copy()
    return action * (1.0 + sigma * rng.standard_normal(action.shape))
