"""
Robot model description: kinematic tree, mass properties, actuation limits, feet and
the left-right symmetry map. Models are read from versioned YAML files.
"""

import copy
import hashlib
import json

import numpy as np
import yaml

from zml_util import Util

zlog = Util.get_logger(module=__name__)

MODEL_FORMAT_VERSION = 1

# Reflection across the x-z plane
MIRROR = np.diag([1.0, -1.0, 1.0])

JOINT_GROUPS = ("leg", "waist", "arm")

# Joint groups driven by the policy in the lower-body-only setting
LOWER_BODY_GROUPS = ("leg",)

SYMMETRY_TOLERANCE = 1e-9


class ModelError(Exception):
    pass


class FootDescriptor(object):
    def __init__(self, name, link, sole_points, sole_center):
        self.name = name
        self.link = int(link)
        self.sole_points = _frozen(np.asarray(sole_points, dtype=float).reshape(-1, 3))
        self.sole_center = _frozen(np.asarray(sole_center, dtype=float).reshape(3))


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def box_inertia(mass, size):
    a, b, c = size
    return np.diag(
        [
            mass * (b * b + c * c) / 12.0,
            mass * (a * a + c * c) / 12.0,
            mass * (a * a + b * b) / 12.0,
        ]
    )


def axis_mirror_sign(axis, partner_axis):
    """
    Return s such that reflecting `axis` (an axial vector) gives s * partner_axis, or None.
    """
    reflected = -MIRROR @ np.asarray(axis, dtype=float)
    partner_axis = np.asarray(partner_axis, dtype=float)
    for sign in (1.0, -1.0):
        if np.allclose(reflected, sign * partner_axis, atol=SYMMETRY_TOLERANCE):
            return sign
    return None


class RobotModel(object):
    """
    Immutable articulated floating-base robot.

    Links are ordered so every joint's parent link precedes its child link; link 0
    is the root (base) link. Arrays are read-only; randomized variants are new
    instances produced by `scaled`.
    """

    def __init__(
        self,
        name,
        link_names,
        link_mass,
        link_inertia,
        link_com,
        joint_names,
        joint_parent,
        joint_child,
        joint_origin,
        joint_axis,
        joint_lower,
        joint_upper,
        velocity_limit,
        torque_limit,
        default_q,
        kp,
        kd,
        joint_groups,
        feet,
        collision_points,
        symmetry_perm,
        symmetry_sign,
        fixed_base=False,
    ):
        self.name = name
        self.format_version = MODEL_FORMAT_VERSION
        self.link_names = tuple(link_names)
        self.link_mass = _frozen(link_mass)
        self.link_inertia = _frozen(np.asarray(link_inertia, dtype=float).reshape(-1, 3, 3))
        self.link_com = _frozen(np.asarray(link_com, dtype=float).reshape(-1, 3))
        self.joint_names = tuple(joint_names)
        self.joint_parent = np.array(joint_parent, dtype=int)
        self.joint_child = np.array(joint_child, dtype=int)
        self.joint_origin = _frozen(np.asarray(joint_origin, dtype=float).reshape(-1, 3))
        axes = np.asarray(joint_axis, dtype=float).reshape(-1, 3)
        self.joint_axis = _frozen(axes / np.linalg.norm(axes, axis=1, keepdims=True))
        self.joint_lower = _frozen(joint_lower)
        self.joint_upper = _frozen(joint_upper)
        self.velocity_limit = _frozen(velocity_limit)
        self.torque_limit = _frozen(torque_limit)
        self.default_q = _frozen(default_q)
        self.kp = _frozen(kp)
        self.kd = _frozen(kd)
        self.joint_groups = tuple(joint_groups)
        self.feet = tuple(feet)
        self.collision_points = tuple(
            (int(link), _frozen(offset)) for link, offset in collision_points
        )
        self.symmetry_perm = np.array(symmetry_perm, dtype=int)
        self.symmetry_sign = _frozen(symmetry_sign)
        self.fixed_base = bool(fixed_base)

        for array in (self.joint_parent, self.joint_child, self.symmetry_perm):
            array.setflags(write=False)

        self._validate()
        self._build_tree()

    @property
    def n_links(self):
        return len(self.link_names)

    @property
    def n_dof(self):
        return len(self.joint_names)

    @property
    def n_velocity(self):
        return 6 + self.n_dof

    @property
    def total_mass(self):
        return float(np.sum(self.link_mass))

    def _validate(self):
        n, n_links = self.n_dof, self.n_links
        if n_links != n + 1:
            raise ModelError("A tree with {} joints needs {} links".format(n, n + 1))
        if np.any(self.link_mass <= 0.0):
            raise ModelError("Every link mass must be positive")
        for name, inertia in zip(self.link_names, self.link_inertia):
            if not np.allclose(inertia, inertia.T, atol=1e-12):
                raise ModelError("Inertia of link '{}' is not symmetric".format(name))
            if np.min(np.linalg.eigvalsh(inertia)) <= 0.0:
                raise ModelError("Inertia of link '{}' is not positive definite".format(name))
        children = sorted(self.joint_child.tolist())
        if children != list(range(1, n_links)):
            raise ModelError("Every non-root link must be the child of exactly one joint")
        for j in range(n):
            if self.joint_parent[j] >= self.joint_child[j]:
                raise ModelError(
                    "Joint '{}' must have a parent link preceding its child".format(
                        self.joint_names[j]
                    )
                )
        if np.any(self.joint_lower >= self.joint_upper):
            raise ModelError("Joint position limits must satisfy lower < upper")
        if np.any(self.torque_limit <= 0.0) or np.any(self.velocity_limit <= 0.0):
            raise ModelError("Torque and velocity limits must be positive")
        for group in self.joint_groups:
            if group not in JOINT_GROUPS:
                raise ModelError("Unknown joint group '{}'".format(group))
        if not self.fixed_base and len(self.feet) != 2:
            raise ModelError(
                "A floating-base robot needs exactly 2 feet, got {}".format(len(self.feet))
            )
        for foot in self.feet:
            if len(foot.sole_points) < 4:
                raise ModelError("Foot '{}' needs at least 4 sole points".format(foot.name))

        perm, sign = self.symmetry_perm, self.symmetry_sign
        if sorted(perm.tolist()) != list(range(n)):
            raise ModelError("Symmetry map is not a permutation of the joints")
        if not np.array_equal(perm[perm], np.arange(n)):
            raise ModelError("Symmetry map is not an involution")
        if not np.all(np.abs(sign) == 1.0) or not np.array_equal(sign[perm], sign):
            raise ModelError("Symmetry signs must be +/-1 and agree within each pair")
        for j in range(n):
            partner = perm[j]
            derived = axis_mirror_sign(self.joint_axis[j], self.joint_axis[partner])
            if derived is None or derived != sign[j]:
                raise ModelError(
                    "Symmetry sign of '{}' does not match the reflected joint axis".format(
                        self.joint_names[j]
                    )
                )
            if not np.allclose(
                MIRROR @ self.joint_origin[j], self.joint_origin[partner], atol=SYMMETRY_TOLERANCE
            ):
                raise ModelError(
                    "Joint '{}' origin is not mirrored by its partner".format(self.joint_names[j])
                )

    def _build_tree(self):
        n, n_links = self.n_dof, self.n_links
        link_parent_joint = -np.ones(n_links, dtype=int)
        for j in range(n):
            link_parent_joint[self.joint_child[j]] = j

        # Joints in topological order (by child link index)
        self.joint_order = np.argsort(self.joint_child)

        ancestors = np.zeros((n_links, n))
        for link in range(1, n_links):
            j = link_parent_joint[link]
            ancestors[link] = ancestors[self.joint_parent[j]]
            ancestors[link, j] = 1.0
        self.link_parent_joint = link_parent_joint
        self.ancestors = _frozen(ancestors)
        # joint_ancestors[j, k] = 1 when joint k moves the parent link of joint j
        self.joint_ancestors = _frozen(ancestors[self.joint_parent])

        link_perm = np.zeros(n_links, dtype=int)
        for j in range(n):
            link_perm[self.joint_child[j]] = self.joint_child[self.symmetry_perm[j]]
        self.link_perm = link_perm
        for j in range(n):
            child, partner = self.joint_child[j], link_perm[self.joint_child[j]]
            mirrored_inertia = MIRROR @ self.link_inertia[child] @ MIRROR
            if (
                not np.isclose(self.link_mass[child], self.link_mass[partner])
                or not np.allclose(
                    MIRROR @ self.link_com[child], self.link_com[partner], atol=SYMMETRY_TOLERANCE
                )
                or not np.allclose(
                    mirrored_inertia, self.link_inertia[partner], atol=SYMMETRY_TOLERANCE
                )
            ):
                raise ModelError(
                    "Link '{}' mass properties are not mirrored by its partner".format(
                        self.link_names[child]
                    )
                )

        if len(self.feet) == 2:
            left, right = self.feet
            if link_perm[left.link] != right.link or not np.allclose(
                left.sole_points @ MIRROR, right.sole_points, atol=SYMMETRY_TOLERANCE
            ):
                raise ModelError("Foot sole descriptors are not mirror images")

        # Contact candidates: every sole point, then every non-foot collision point
        links, offsets, owner = [], [], []
        for index, foot in enumerate(self.feet):
            for point in foot.sole_points:
                links.append(foot.link)
                offsets.append(point)
                owner.append(index)
        for link, offset in self.collision_points:
            links.append(link)
            offsets.append(offset)
            owner.append(-1)
        self.contact_links = np.array(links, dtype=int)
        self.contact_offsets = _frozen(np.reshape(offsets, (-1, 3)))
        self.contact_owner = np.array(owner, dtype=int)

        for array in (
            self.link_parent_joint,
            self.link_perm,
            self.joint_order,
            self.contact_links,
            self.contact_owner,
        ):
            array.setflags(write=False)

    def joint_index(self, name):
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise ModelError("Unknown joint '{}'".format(name))

    def link_index(self, name):
        try:
            return self.link_names.index(name)
        except ValueError:
            raise ModelError("Unknown link '{}'".format(name))

    def control_joint_indices(self, control_joints="all"):
        """
        Indices of joints driven by the policy: every joint, or the leg joints only.
        """
        if control_joints == "all":
            return np.arange(self.n_dof)
        if control_joints == "lower":
            return np.array(
                [j for j, group in enumerate(self.joint_groups) if group in LOWER_BODY_GROUPS],
                dtype=int,
            )
        raise ModelError("Unknown control joint selection '{}'".format(control_joints))

    def model_hash(self):
        """
        Stable digest over the full model content, used to pair checkpoints with models.
        """
        content = {
            "name": self.name,
            "format_version": self.format_version,
            "links": self.link_names,
            "mass": self.link_mass.tolist(),
            "inertia": self.link_inertia.tolist(),
            "com": self.link_com.tolist(),
            "joints": self.joint_names,
            "parent": self.joint_parent.tolist(),
            "child": self.joint_child.tolist(),
            "origin": self.joint_origin.tolist(),
            "axis": self.joint_axis.tolist(),
            "limits": [self.joint_lower.tolist(), self.joint_upper.tolist()],
            "torque_limit": self.torque_limit.tolist(),
            "velocity_limit": self.velocity_limit.tolist(),
            "default_q": self.default_q.tolist(),
            "gains": [self.kp.tolist(), self.kd.tolist()],
            "feet": [[f.link, f.sole_points.tolist(), f.sole_center.tolist()] for f in self.feet],
            "symmetry": [self.symmetry_perm.tolist(), self.symmetry_sign.tolist()],
            "fixed_base": self.fixed_base,
        }
        encoded = json.dumps(content, sort_keys=True).encode("utf-8")
        return hashlib.sha256(encoded).hexdigest()

    def scaled(
        self,
        link_mass_scale=None,
        load_mass=0.0,
        base_com_offset=None,
        kp_scale=None,
        kd_scale=None,
    ):
        """
        Return a new model with randomized mass properties and PD gains.

        Inertias scale with their link mass. The load mass is added to the base link.
        """
        if link_mass_scale is None:
            link_mass_scale = np.ones(self.n_links)
        mass_scale = np.asarray(link_mass_scale)
        mass = self.link_mass * mass_scale
        inertia = self.link_inertia * mass_scale[:, None, None]
        com = np.array(self.link_com)

        base_mass = mass[0] + load_mass
        if base_mass <= 0.0:
            raise ModelError("Load mass {} leaves a non-positive base mass".format(load_mass))
        inertia[0] = inertia[0] * (base_mass / mass[0])
        mass[0] = base_mass
        if base_com_offset is not None:
            com[0] = com[0] + np.asarray(base_com_offset)

        kp = self.kp * (1.0 if kp_scale is None else np.asarray(kp_scale))
        kd = self.kd * (1.0 if kd_scale is None else np.asarray(kd_scale))

        # Randomized variants are not symmetric and skip validation
        model = copy.copy(self)
        model.link_mass = _frozen(mass)
        model.link_inertia = _frozen(inertia)
        model.link_com = _frozen(com)
        model.kp = _frozen(kp)
        model.kd = _frozen(kd)
        return model

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, "r") as f:
                config = yaml.safe_load(f)
        except OSError as e:
            zlog.error("Error reading robot model file '{}'".format(path))
            raise ModelError("Cannot read robot model file '{}': {}".format(path, e))
        if not isinstance(config, dict):
            raise ModelError("Robot model file '{}' is not a mapping".format(path))
        zlog.info("Loading robot model from {}".format(path))
        return cls.from_config(config)

    @classmethod
    def from_config(cls, config):
        """
        Build a model from a nested mapping (the parsed model file).
        """
        version = config.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ModelError(
                "Unsupported robot model format_version {}, expected {}".format(
                    version, MODEL_FORMAT_VERSION
                )
            )
        config = _expand_mirrored(config)

        links = config.get("links") or []
        joints = config.get("joints") or []
        if not links:
            raise ModelError("Robot model defines no links")

        link_names = [link["name"] for link in links]
        if len(set(link_names)) != len(link_names):
            raise ModelError("Duplicate link names in robot model")
        link_lookup = {name: i for i, name in enumerate(link_names)}

        def lookup(name):
            if name not in link_lookup:
                raise ModelError("Unknown link '{}'".format(name))
            return link_lookup[name]

        mass, inertia, com = [], [], []
        for link in links:
            m = float(link["mass"])
            mass.append(m)
            com.append(link.get("com", [0.0, 0.0, 0.0]))
            if "inertia" in link:
                value = np.asarray(link["inertia"], dtype=float)
                inertia.append(np.diag(value) if value.shape == (3,) else value.reshape(3, 3))
            elif "size" in link:
                inertia.append(box_inertia(m, link["size"]))
            else:
                raise ModelError("Link '{}' needs either inertia or size".format(link["name"]))

        joint_names = [joint["name"] for joint in joints]
        if len(set(joint_names)) != len(joint_names):
            raise ModelError("Duplicate joint names in robot model")
        order = sorted(range(len(joints)), key=lambda j: lookup(joints[j]["child"]))
        joints = [joints[j] for j in order]
        joint_names = [joint["name"] for joint in joints]

        def column(key, default=None):
            values = []
            for joint in joints:
                if key not in joint and default is None:
                    raise ModelError("Joint '{}' is missing '{}'".format(joint["name"], key))
                values.append(joint.get(key, default))
            return np.asarray(values, dtype=float)

        limits = np.asarray([joint["limits"] for joint in joints], dtype=float).reshape(-1, 2)

        feet = [
            FootDescriptor(
                foot["name"], lookup(foot["link"]), foot["sole_points"], foot["sole_center"]
            )
            for foot in config.get("feet") or []
        ]
        collision_points = [
            (lookup(point["link"]), point.get("offset", [0.0, 0.0, 0.0]))
            for point in config.get("collision_points") or []
        ]

        axes = np.asarray([joint["axis"] for joint in joints], dtype=float)
        perm, sign = _symmetry_map(joint_names, axes, config.get("symmetry") or {})

        return cls(
            name=config.get("name", "robot"),
            link_names=link_names,
            link_mass=mass,
            link_inertia=inertia,
            link_com=com,
            joint_names=joint_names,
            joint_parent=[lookup(joint["parent"]) for joint in joints],
            joint_child=[lookup(joint["child"]) for joint in joints],
            joint_origin=[joint.get("origin", [0.0, 0.0, 0.0]) for joint in joints],
            joint_axis=axes,
            joint_lower=limits[:, 0],
            joint_upper=limits[:, 1],
            velocity_limit=column("velocity_limit"),
            torque_limit=column("torque_limit"),
            default_q=column("default", 0.0),
            kp=column("kp"),
            kd=column("kd"),
            joint_groups=[joint.get("group", "leg") for joint in joints],
            feet=feet,
            collision_points=collision_points,
            symmetry_perm=perm,
            symmetry_sign=sign,
            fixed_base=config.get("fixed_base", False),
        )


def _swap_prefix(name, prefixes):
    left, right = prefixes
    if name.startswith(left):
        return right + name[len(left) :]
    if name.startswith(right):
        return left + name[len(right) :]
    return name


def _mirror_axis(axis):
    """
    Axis for the generated partner joint and the resulting symmetry sign.
    Axis-aligned joints keep their axis; others take the reflected axial vector.
    """
    axis = np.asarray(axis, dtype=float)
    sign = axis_mirror_sign(axis, axis)
    if sign is not None:
        return axis.tolist(), sign
    return (-MIRROR @ axis).tolist(), 1.0


def _expand_mirrored(config):
    """
    Generate right-side links, joints, feet and collision points from their left-side
    counterparts when the symmetry section asks for it.
    """
    symmetry = config.get("symmetry") or {}
    if not symmetry.get("generate", False):
        return config
    prefixes = symmetry.get("prefixes")
    if not prefixes or len(prefixes) != 2:
        raise ModelError("Mirrored generation needs a pair of name prefixes")
    left = prefixes[0]
    config = copy.deepcopy(config)

    def reflect(vector):
        return (MIRROR @ np.asarray(vector, dtype=float)).tolist()

    new_links = []
    for link in config.get("links") or []:
        if link["name"].startswith(left):
            mirrored = dict(link)
            mirrored["name"] = _swap_prefix(link["name"], prefixes)
            if "com" in link:
                mirrored["com"] = reflect(link["com"])
            if "inertia" in link:
                value = np.asarray(link["inertia"], dtype=float)
                if value.shape != (3,):
                    mirrored["inertia"] = (MIRROR @ value.reshape(3, 3) @ MIRROR).tolist()
            new_links.append(mirrored)
    config["links"] = list(config.get("links") or []) + new_links

    new_joints = []
    for joint in config.get("joints") or []:
        if joint["name"].startswith(left):
            mirrored = dict(joint)
            mirrored["name"] = _swap_prefix(joint["name"], prefixes)
            mirrored["parent"] = _swap_prefix(joint["parent"], prefixes)
            mirrored["child"] = _swap_prefix(joint["child"], prefixes)
            mirrored["origin"] = reflect(joint.get("origin", [0.0, 0.0, 0.0]))
            axis, sign = _mirror_axis(joint["axis"])
            mirrored["axis"] = axis
            lower, upper = joint["limits"]
            mirrored["limits"] = [lower, upper] if sign > 0 else [-upper, -lower]
            mirrored["default"] = sign * joint.get("default", 0.0)
            new_joints.append(mirrored)
    config["joints"] = list(config.get("joints") or []) + new_joints

    new_feet = []
    for foot in config.get("feet") or []:
        if foot["link"].startswith(left):
            new_feet.append(
                {
                    "name": _swap_prefix(foot["name"], prefixes),
                    "link": _swap_prefix(foot["link"], prefixes),
                    "sole_points": [reflect(p) for p in foot["sole_points"]],
                    "sole_center": reflect(foot["sole_center"]),
                }
            )
    config["feet"] = list(config.get("feet") or []) + new_feet

    new_points = []
    for point in config.get("collision_points") or []:
        if point["link"].startswith(left):
            new_points.append(
                {
                    "link": _swap_prefix(point["link"], prefixes),
                    "offset": reflect(point.get("offset", [0.0, 0.0, 0.0])),
                }
            )
    config["collision_points"] = list(config.get("collision_points") or []) + new_points
    return config


def _symmetry_map(joint_names, axes, symmetry):
    """
    Pair joints by name prefix (plus explicit pairs) and derive each sign from the axes.
    """
    n = len(joint_names)
    lookup = {name: j for j, name in enumerate(joint_names)}
    perm = np.arange(n)
    prefixes = symmetry.get("prefixes")
    if prefixes:
        for j, name in enumerate(joint_names):
            partner = _swap_prefix(name, prefixes)
            if partner != name:
                if partner not in lookup:
                    raise ModelError(
                        "Joint '{}' has no mirrored partner '{}'".format(name, partner)
                    )
                perm[j] = lookup[partner]
    for pair in symmetry.get("pairs") or []:
        a, b = pair[0], pair[1]
        if a not in lookup or b not in lookup:
            raise ModelError("Unknown joint in symmetry pair {}".format(pair))
        perm[lookup[a]], perm[lookup[b]] = lookup[b], lookup[a]

    sign = np.ones(n)
    for j in range(n):
        derived = axis_mirror_sign(axes[j], axes[perm[j]])
        if derived is None:
            raise ModelError(
                "Joint '{}' axis cannot be mirrored onto its partner".format(joint_names[j])
            )
        sign[j] = derived
    for pair in symmetry.get("pairs") or []:
        if len(pair) > 2 and float(pair[2]) != sign[lookup[pair[0]]]:
            raise ModelError("Declared symmetry sign of {} contradicts the joint axes".format(pair))
    return perm, sign


def load_model(path):
    return RobotModel.from_file(path)
