"""
Procedural narrow terrains and height-field queries.

A terrain is a straight path along +x starting at the robot's spawn point. Narrow kinds
are bordered by a drop on both sides; the plane has no edges.
"""

import csv
from enum import Enum

import numpy as np

from zml_util import Util

zlog = Util.get_logger(module=__name__)

NUM_LEVELS = 20
MAX_LEVEL = NUM_LEVELS - 1

# (level 0, level 19) endpoints
WIDTH_RANGE = (1.0, 0.2)
GRADIENT_RANGE = (0.0, 0.3)
STEP_HEIGHT_RANGE = (0.0, 0.12)

STEP_WIDTH = 0.4
CELL_SIZE = 1.0 / 32.0
OFF_PATH_DROP = 1.0
DEFAULT_PATH_LENGTH = 8.0
# Flat platform behind the spawn point
START_PLATFORM = 1.0
# Lateral extent of the stored grid beyond the path edge
GRID_MARGIN = 1.0
PLANE_HALF_EXTENT = 3.0

WINDOW_LENGTH = 1.6
WINDOW_WIDTH = 1.0
WINDOW_SPACING = 0.1


class TerrainKind(Enum):
    NARROW_FLAT = "narrow_flat"
    NARROW_SLOPE = "narrow_slope"
    NARROW_STAIRS = "narrow_stairs"
    PLANE = "plane"


MIX_PROBABILITIES = (
    (TerrainKind.NARROW_FLAT, 0.3),
    (TerrainKind.NARROW_SLOPE, 0.3),
    (TerrainKind.NARROW_STAIRS, 0.3),
    (TerrainKind.PLANE, 0.1),
)


def parse_kind(value):
    if isinstance(value, TerrainKind):
        return value
    try:
        return TerrainKind(value)
    except ValueError:
        raise ValueError("Unknown terrain kind: {}".format(value))


class TerrainSpec(object):
    def __init__(
        self,
        kind,
        level,
        width,
        gradient,
        step_height,
        step_width=STEP_WIDTH,
        path_length=DEFAULT_PATH_LENGTH,
        friction=1.0,
        descending=False,
    ):
        self.kind = parse_kind(kind)
        self.level = int(level)
        self.width = float(width)
        self.gradient = float(gradient)
        self.step_height = float(step_height)
        self.step_width = float(step_width)
        self.path_length = float(path_length)
        self.friction = float(friction)
        self.descending = bool(descending)

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "level": self.level,
            "width": self.width,
            "gradient": self.gradient,
            "step_height": self.step_height,
            "step_width": self.step_width,
            "path_length": self.path_length,
            "friction": self.friction,
            "descending": self.descending,
        }

    def __repr__(self):
        return "TerrainSpec({})".format(
            ", ".join("{}={}".format(k, v) for k, v in self.to_dict().items())
        )


class HeightField(object):
    """
    Cell-constant elevation grid plus the geometric extent of the walkable path.

    `grid[ix, iy]` is the elevation of the cell whose lower corner is
    origin + (ix, iy) * cell_size. Points off the path report `sentinel`.
    """

    def __init__(
        self,
        origin,
        cell_size,
        grid,
        path_half_width=np.inf,
        path_x_range=(-np.inf, np.inf),
        sentinel=-OFF_PATH_DROP,
        friction=1.0,
        spec=None,
    ):
        self.origin = np.array(origin, dtype=float)
        self.cell_size = float(cell_size)
        self.grid = np.array(grid, dtype=float)
        self.grid.setflags(write=False)
        self.path_half_width = float(path_half_width)
        self.path_x_range = (float(path_x_range[0]), float(path_x_range[1]))
        self.sentinel = float(sentinel)
        self.friction = float(friction)
        self.spec = spec

    @property
    def shape(self):
        return self.grid.shape

    def cell_index(self, x, y):
        # Offset guards query points that land exactly on a cell boundary
        ix = np.floor((np.asarray(x) - self.origin[0]) / self.cell_size + 1e-9).astype(int)
        iy = np.floor((np.asarray(y) - self.origin[1]) / self.cell_size + 1e-9).astype(int)
        nx, ny = self.grid.shape
        return np.clip(ix, 0, nx - 1), np.clip(iy, 0, ny - 1)

    def on_path(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        low, high = self.path_x_range
        return (np.abs(y) <= self.path_half_width) & (x >= low) & (x <= high)


def terrain_params(level):
    """
    Curriculum parameters (width, gradient, step height) interpolated linearly in level.
    """
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError("Terrain level {} outside [0, {}]".format(level, MAX_LEVEL))
    t = level / float(MAX_LEVEL)

    def lerp(bounds):
        return bounds[0] + (bounds[1] - bounds[0]) * t

    return lerp(WIDTH_RANGE), lerp(GRADIENT_RANGE), lerp(STEP_HEIGHT_RANGE)


def mix_terrains(rng, size=None):
    kinds = [kind for kind, _ in MIX_PROBABILITIES]
    probabilities = [p for _, p in MIX_PROBABILITIES]
    index = rng.choice(len(kinds), size=size, p=probabilities)
    if size is None:
        return kinds[int(index)]
    return [kinds[int(i)] for i in index]


def path_profile(spec, x):
    """
    Elevation along the path centerline; flat behind the spawn point.
    """
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    direction = -1.0 if spec.descending else 1.0
    if spec.kind == TerrainKind.NARROW_SLOPE:
        return direction * spec.gradient * x
    if spec.kind == TerrainKind.NARROW_STAIRS:
        return direction * spec.step_height * np.floor(x / spec.step_width)
    return np.zeros_like(x)


def build_height_field(spec, cell_size=CELL_SIZE):
    x_low, x_high = -START_PLATFORM, spec.path_length
    if spec.kind == TerrainKind.PLANE:
        half_width = np.inf
        y_extent = PLANE_HALF_EXTENT
    else:
        half_width = 0.5 * spec.width
        y_extent = half_width + GRID_MARGIN

    nx = int(np.ceil((x_high - x_low) / cell_size)) + 1
    ny = int(np.ceil(2.0 * y_extent / cell_size))
    cell_x = x_low + cell_size * np.arange(nx)
    profile = path_profile(spec, cell_x)
    grid = np.repeat(profile[:, None], ny, axis=1)

    sentinel = min(float(np.min(profile)), 0.0) - OFF_PATH_DROP
    x_range = (-np.inf, np.inf) if spec.kind == TerrainKind.PLANE else (x_low, x_high)
    return HeightField(
        origin=(x_low, -y_extent),
        cell_size=cell_size,
        grid=grid,
        path_half_width=half_width,
        path_x_range=x_range,
        sentinel=sentinel,
        friction=spec.friction,
        spec=spec,
    )


def generate_terrain(kind, level, rng, **overrides):
    """
    Build the terrain spec and height field for a curriculum level.

    `overrides` may fix width, gradient, step_height, friction, path_length or
    descending (evaluation presets). The rng picks ascending or descending.
    """
    kind = parse_kind(kind)
    width, gradient, step_height = terrain_params(level)
    descending = bool(rng.random() < 0.5)
    if kind not in (TerrainKind.NARROW_SLOPE, TerrainKind.NARROW_STAIRS):
        gradient, step_height, descending = 0.0, 0.0, False
    elif kind == TerrainKind.NARROW_SLOPE:
        step_height = 0.0
    else:
        gradient = 0.0

    params = {
        "width": width,
        "gradient": gradient,
        "step_height": step_height,
        "descending": descending,
        "friction": 1.0,
        "path_length": DEFAULT_PATH_LENGTH,
    }
    for key, value in overrides.items():
        if key not in params:
            raise ValueError("Unknown terrain override: {}".format(key))
        if value is not None:
            params[key] = value

    spec = TerrainSpec(kind, level, **params)
    zlog.debug("Generated terrain {}".format(spec))
    return spec, build_height_field(spec)


def height_at(hf, x, y):
    """
    Cell-constant elevation and on-path flag. Total: points outside the grid use the
    nearest cell, points off the path report the sentinel drop.
    """
    ix, iy = hf.cell_index(x, y)
    on_path = hf.on_path(x, y)
    elevation = np.where(on_path, hf.grid[ix, iy], hf.sentinel)
    if np.ndim(elevation) == 0:
        return float(elevation), bool(on_path)
    return elevation, on_path


def path_elevation(hf, x):
    """
    Elevation of the path surface at x regardless of the lateral position.
    """
    ix, _ = hf.cell_index(x, 0.0)
    values = hf.grid[ix, hf.grid.shape[1] // 2]
    if np.ndim(values) == 0:
        return float(values)
    return values


def edge_distance(hf, y):
    """
    Lateral distance to the nearest path edge, negative once past it.
    """
    return hf.path_half_width - np.abs(y)


def window_offsets(length=WINDOW_LENGTH, width=WINDOW_WIDTH, spacing=WINDOW_SPACING):
    """
    Base-frame (dx, dy) sample offsets, x-major: index = ix * ny + iy.
    """
    nx = int(round(length / spacing)) + 1
    ny = int(round(width / spacing)) + 1
    dx = -0.5 * length + spacing * np.arange(nx)
    dy = -0.5 * width + spacing * np.arange(ny)
    grid_x, grid_y = np.meshgrid(dx, dy, indexing="ij")
    return np.stack([grid_x.reshape(-1), grid_y.reshape(-1)], axis=1)


WINDOW_SHAPE = (
    int(round(WINDOW_LENGTH / WINDOW_SPACING)) + 1,
    int(round(WINDOW_WIDTH / WINDOW_SPACING)) + 1,
)
WINDOW_SIZE = WINDOW_SHAPE[0] * WINDOW_SHAPE[1]

_WINDOW_OFFSETS = window_offsets()


def sample_height_window(hf, base_pos, yaw):
    """
    Terrain elevation minus base height on a yaw-aligned grid centered on the base.
    """
    c, s = np.cos(yaw), np.sin(yaw)
    dx, dy = _WINDOW_OFFSETS[:, 0], _WINDOW_OFFSETS[:, 1]
    x = base_pos[0] + c * dx - s * dy
    y = base_pos[1] + s * dx + c * dy
    elevation, _ = height_at(hf, x, y)
    return elevation - base_pos[2]


def dump_height_field_csv(hf, path):
    """
    Write the height field as `x,y,elevation` rows at cell centers.
    """
    nx, ny = hf.grid.shape
    xs = hf.origin[0] + hf.cell_size * (np.arange(nx) + 0.5)
    ys = hf.origin[1] + hf.cell_size * (np.arange(ny) + 0.5)
    grid_x, grid_y = np.meshgrid(xs, ys, indexing="ij")
    elevation, _ = height_at(hf, grid_x.reshape(-1), grid_y.reshape(-1))
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x", "y", "elevation"])
            for row in zip(grid_x.reshape(-1), grid_y.reshape(-1), elevation):
                writer.writerow(["{:.6f}".format(v) for v in row])
    except OSError:
        zlog.error("Error writing height field to '{}'".format(path))
        raise
    return path
