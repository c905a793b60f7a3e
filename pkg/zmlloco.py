#!/usr/bin/env python3
import sys

from zml_cli import Cli


def main(argv):
    return Cli.main(argv)


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
