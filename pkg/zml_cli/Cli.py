"""
Command-line entry points: train, eval, analyze-zmp and ablate.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""

import argparse
import csv
import os
import sys

from zml_cli import Analyze, Evaluate
from zml_dynamics import Dynamics, Model
from zml_env import EpisodeLog
from zml_learn import Checkpoint, Ppo, Trainer
from zml_util import Config, Util

zlog = Util.get_logger(module=__name__)

COMMANDS = ("train", "eval", "analyze-zmp", "ablate")
LOG_FILE = "zmlloco.log"
DETAIL_LOG_FILE = "zmlloco-detail.log"
ABLATION_FILENAME = "ablation.csv"
BASELINE_VARIANT = "baseline"
VARIANTS = (BASELINE_VARIANT, "no_zmp", "no_vectorization", "action_noise", "no_upper")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def parse_argv(argv):
    parser = argparse.ArgumentParser(
        prog="zmlloco", description="ZMP-guided humanoid locomotion training and evaluation"
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="Run config file merged over the shipped defaults")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--checkpoint", help="Checkpoint to evaluate or resume from")
    parser.add_argument("--terrain", choices=Config.TERRAIN_CHOICES[1:])
    parser.add_argument("--widths", type=float, nargs="+")
    parser.add_argument("--difficulty", choices=sorted(Config.DIFFICULTY_PRESETS))
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--variants", nargs="+")
    parser.add_argument("--iterations", type=int, help="Override train.iterations")
    parser.add_argument("--episode-log", help="Episode log to analyze (analyze-zmp)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY.PATH=VALUE",
        help="Override a config entry; may be repeated",
    )
    return parser.parse_args(argv)


def apply_variant(config, variant):
    """
    Return a copy of `config` with one ablation applied.
    """
    config = config.copy()
    name, _, value = variant.partition("=")
    if name not in VARIANTS or (name == "action_noise") != bool(value):
        raise Config.ValidationError("Unknown ablation variant: {}".format(variant))
    if name == "no_zmp":
        config.set("rewards.weights.zmp", 0.0)
    elif name == "no_vectorization":
        config.set("train.vectorized", False)
    elif name == "no_upper":
        config.set("control.control_joints", "lower")
    elif name == "action_noise":
        try:
            sigma = float(value)
        except ValueError:
            raise Config.ValidationError("Action noise must be a number: {}".format(variant))
        if sigma < 0.0:
            raise Config.ValidationError("Action noise must be non-negative: {}".format(variant))
        config.set("randomization.action_noise", sigma)
    return config


def cmd_train(config, out_dir, resume=None, iterations=None):
    config.dump(out_dir)
    path = Trainer.train(config, out_dir, resume=resume, iterations=iterations)
    print("Final checkpoint: {}".format(path))
    return path


def cmd_ablate(config, variants, out_dir, episodes, iterations=None):
    """
    Train every variant (plus the baseline) for every ablation seed and evaluate each
    policy on the configured evaluation setting. Writes `ablation.csv`.
    """
    variants = [BASELINE_VARIANT] + [v for v in variants if v != BASELINE_VARIANT]
    configs = [(variant, apply_variant(config, variant)) for variant in variants]
    evaluation = config["evaluation"]
    Util.ensure_directory(out_dir)
    config.dump(out_dir)

    rows = []
    for variant, variant_config in configs:
        for seed in config["ablation"]["seeds"]:
            run_config = variant_config.copy()
            run_config.set("seed", int(seed))
            run_dir = os.path.join(out_dir, variant.replace("=", "-"), "seed-{}".format(seed))
            zlog.info("Ablation {} seed {}".format(variant, seed))
            checkpoint = cmd_train(run_config, run_dir, iterations=iterations)
            results = Evaluate.cmd_eval(
                run_config,
                checkpoint,
                evaluation["terrain"],
                evaluation["widths"],
                evaluation["difficulty"],
                episodes,
                int(seed),
                os.path.join(run_dir, "eval"),
            )
            for result in results:
                row = {"variant": variant, "seed": seed}
                row.update(result.as_row())
                rows.append(row)

    path = os.path.join(out_dir, ABLATION_FILENAME)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=("variant", "seed") + Evaluate.EVAL_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print("Ablation table: {}".format(path))
    return rows


def _load_config(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append("seed={}".format(args.seed))
    return Config.load_run_config(args.config, overrides)


def run(args):
    config = _load_config(args)
    out_dir = args.out or config["output_dir"]
    Util.configure_logging(LOG_FILE, log_dir=os.path.join(out_dir, Util.LOG_SUBDIRECTORY))
    Util.configure_logging(
        DETAIL_LOG_FILE,
        Util.DETAIL_LOGGER_PREFIX,
        backup_count=10,
        log_dir=os.path.join(out_dir, Util.LOG_SUBDIRECTORY),
    )
    zlog.info("Starting zmlloco {}".format(args.command))
    evaluation = config["evaluation"]
    episodes = args.episodes or evaluation["episodes"]

    if args.command == "train":
        cmd_train(config, out_dir, resume=args.checkpoint, iterations=args.iterations)
    elif args.command == "eval":
        if args.checkpoint is None:
            raise Config.ValidationError("eval requires --checkpoint")
        Evaluate.cmd_eval(
            config,
            args.checkpoint,
            args.terrain or evaluation["terrain"],
            args.widths or evaluation["widths"],
            args.difficulty or evaluation["difficulty"],
            episodes,
            config["seed"],
            out_dir,
        )
    elif args.command == "analyze-zmp":
        if args.episode_log is None:
            raise Config.ValidationError("analyze-zmp requires --episode-log")
        config.dump(out_dir)
        Analyze.cmd_analyze_zmp(args.episode_log, out_dir)
    elif args.command == "ablate":
        variants = args.variants or config["ablation"]["variants"]
        cmd_ablate(config, variants, out_dir, episodes, iterations=args.iterations)
    return EXIT_OK


def main(argv=None):
    args = parse_argv(sys.argv[1:] if argv is None else argv)
    try:
        return run(args)
    except (Config.ValidationError, Model.ModelError) as e:
        zlog.error(str(e))
        print("Error: {}".format(e), file=sys.stderr)
        return EXIT_CONFIG
    except (
        Checkpoint.CheckpointError,
        EpisodeLog.EpisodeLogError,
        Ppo.NonFiniteLoss,
        Dynamics.NumericalDivergence,
        OSError,
    ) as e:
        zlog.error(str(e))
        print("Error: {}".format(e), file=sys.stderr)
        return EXIT_RUNTIME
