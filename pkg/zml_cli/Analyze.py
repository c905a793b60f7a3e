"""
ZMP-distance analysis of recorded episode logs.
"""

import csv
import os

import numpy as np

from zml_env import EpisodeLog
from zml_util import Util

zlog = Util.get_logger(module=__name__)

TRACE_FILENAME = "zmp-trace.csv"
SUMMARY_FILENAME = "zmp-summary.csv"
TRACE_COLUMNS = ("time", "zmp_distance", "r_zmp", "contact_left", "contact_right")
SUMMARY_COLUMNS = (
    "steps",
    "max_distance",
    "mean_distance",
    "fraction_below",
    "early_max",
    "late_max",
)
STABLE_DISTANCE = 0.05
# Seconds at each end of an episode compared for a growing ZMP distance
TREND_WINDOW = 0.5


def zmp_trace(rows):
    return [{column: row[column] for column in TRACE_COLUMNS} for row in rows]


def _window_max(distances, mask):
    values = distances[mask & np.isfinite(distances)]
    return float(values.max()) if len(values) else float("nan")


def summarize(trace, threshold=STABLE_DISTANCE, window=TREND_WINDOW):
    """
    Max and mean over supported steps; the fraction counts flight steps as unstable.
    `early_max` and `late_max` cover the first and last `window` seconds, so a distance
    that grows before a fall shows as `late_max > early_max`.
    """
    distances = np.array([row["zmp_distance"] for row in trace], dtype=float)
    times = np.array([row["time"] for row in trace], dtype=float)
    supported = distances[np.isfinite(distances)]
    summary = {"steps": len(distances)}
    if len(supported):
        summary["max_distance"] = float(supported.max())
        summary["mean_distance"] = float(supported.mean())
    else:
        summary["max_distance"] = float("nan")
        summary["mean_distance"] = float("nan")
    if len(distances):
        summary["fraction_below"] = float(np.mean(np.nan_to_num(distances, nan=np.inf) < threshold))
        summary["early_max"] = _window_max(distances, times <= times[0] + window)
        summary["late_max"] = _window_max(distances, times >= times[-1] - window)
    else:
        summary["fraction_below"] = float("nan")
        summary["early_max"] = float("nan")
        summary["late_max"] = float("nan")
    return summary


def _write_csv(path, columns, rows):
    try:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns)
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    except OSError:
        zlog.error("Error writing '{}'".format(path))
        raise
    return path


def cmd_analyze_zmp(log_path, out_dir):
    """
    Write the ZMP-distance trace and summary for one episode log. Malformed logs raise
    EpisodeLogError naming the offending line.
    """
    _, rows = EpisodeLog.read_episode_log(log_path)
    trace = zmp_trace(rows)
    summary = summarize(trace)

    Util.ensure_directory(out_dir)
    _write_csv(os.path.join(out_dir, TRACE_FILENAME), TRACE_COLUMNS, trace)
    _write_csv(os.path.join(out_dir, SUMMARY_FILENAME), SUMMARY_COLUMNS, [summary])
    print(
        "steps {}  max {:.4f} m  mean {:.4f} m  below {:.2f} m: {:.3f}".format(
            summary["steps"],
            summary["max_distance"],
            summary["mean_distance"],
            STABLE_DISTANCE,
            summary["fraction_below"],
        )
    )
    zlog.info("Analyzed {} ({} steps)".format(log_path, summary["steps"]))
    return trace, summary
