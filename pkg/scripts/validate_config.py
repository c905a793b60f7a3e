#!/usr/bin/env python3
"""
Utility to verify that a zmlloco run config is properly structured.
Checks the merged config and the robot model it names.
"""
import argparse
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from zml_dynamics.Model import ModelError, load_model  # noqa: E402
from zml_util.Config import ValidationError, load_run_config  # noqa: E402


def parse_args(argv):
    parser = argparse.ArgumentParser()
    parser.add_argument("config", nargs="?", help="Run config file (defaults only if omitted)")
    parser.add_argument("--set", dest="overrides", action="append", default=[])
    return parser.parse_args(argv)


def main(argv):
    args = parse_args(argv)
    try:
        config = load_run_config(args.config, args.overrides)
        model = load_model(config.robot_model_path)
    except (ValidationError, ModelError) as e:
        print("Invalid config: {}".format(e))
        return 2
    print(
        "Config valid: robot '{}' ({} joints, model hash {})".format(
            model.name, model.n_dof, model.model_hash()[:12]
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
