"""
Per-step episode logs: `#`-prefixed header lines (seed, terrain, randomization) followed
by a CSV table with one row per control step.
"""

import csv
import json
import math

from zml_env.Rewards import REWARD_NAMES
from zml_util import Util

zlog = Util.get_logger(module=__name__)

LOG_FORMAT_VERSION = 1

BASE_COLUMNS = (
    "time",
    "base_x",
    "base_y",
    "base_z",
    "yaw",
    "cmd_vx",
    "cmd_vy",
    "cmd_yaw",
    "zmp_distance",
    "r_zmp",
    "contact_left",
    "contact_right",
)
COLUMNS = BASE_COLUMNS + tuple("reward_" + name for name in REWARD_NAMES)


class EpisodeLogError(Exception):
    def __init__(self, message, line=None):
        if line is not None:
            message = "line {}: {}".format(line, message)
        super(EpisodeLogError, self).__init__(message)
        self.line = line


class EpisodeLogWriter(object):
    def __init__(self, path, header):
        self.path = path
        try:
            self._file = open(path, "w", newline="")
        except OSError:
            zlog.error("Error opening episode log '{}'".format(path))
            raise
        self._file.write("# format_version: {}\n".format(LOG_FORMAT_VERSION))
        for key, value in header.items():
            self._file.write("# {}: {}\n".format(key, json.dumps(value, sort_keys=True)))
        self._writer = csv.writer(self._file)
        self._writer.writerow(COLUMNS)

    def write_step(self, row):
        self._writer.writerow([_format(row[column]) for column in COLUMNS])

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _format(value):
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return "{:.9g}".format(value)
    return value


def step_row(state, yaw, command, details, rewards):
    row = {
        "time": state.time,
        "base_x": float(state.base_pos[0]),
        "base_y": float(state.base_pos[1]),
        "base_z": float(state.base_pos[2]),
        "yaw": yaw,
        "cmd_vx": command.lin_vel_x,
        "cmd_vy": command.lin_vel_y,
        "cmd_yaw": command.yaw_rate,
        "zmp_distance": float(details["zmp_distance"]),
        "r_zmp": float(details["r_zmp"]),
        "contact_left": bool(details["contact"][0]),
        "contact_right": bool(details["contact"][1]),
    }
    for name, value in zip(REWARD_NAMES, rewards.values):
        row["reward_" + name] = float(value)
    return row


def read_episode_log(path):
    """
    Parse an episode log into (header, rows). Rows are dicts of floats; malformed rows
    raise EpisodeLogError carrying the line number.
    """
    header = {}
    rows = []
    columns = None
    with open(path, "r", newline="") as f:
        for number, line in enumerate(f, start=1):
            text = line.rstrip("\r\n")
            if not text.strip():
                continue
            if text.startswith("#"):
                key, sep, value = text[1:].partition(":")
                if not sep:
                    raise EpisodeLogError("malformed header line", number)
                try:
                    header[key.strip()] = json.loads(value)
                except ValueError:
                    raise EpisodeLogError("malformed header value", number)
                continue
            fields = next(csv.reader([text]))
            if columns is None:
                columns = fields
                missing = [c for c in BASE_COLUMNS if c not in columns]
                if missing:
                    raise EpisodeLogError("missing columns {}".format(", ".join(missing)), number)
                continue
            if len(fields) != len(columns):
                raise EpisodeLogError(
                    "expected {} fields, found {}".format(len(columns), len(fields)), number
                )
            try:
                values = [float(v) for v in fields]
            except ValueError:
                raise EpisodeLogError("non-numeric field", number)
            if any(math.isinf(v) for v in values):
                raise EpisodeLogError("infinite field", number)
            rows.append(dict(zip(columns, values)))
    return header, rows
