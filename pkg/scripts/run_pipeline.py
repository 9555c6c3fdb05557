#!/usr/bin/env python3
"""Regenerate the shipped identification artifacts.

Records both excitation datasets, trains the two-network model and
validates it on the held-out halves.  All seeds are pinned in the config
files, so the weight file configs/narx_ref.nwt is reproduced bit-for-bit.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

from smibctrl.cli import cli_dispatch

CONFIGS = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, "configs")


def run(argv):
    code = cli_dispatch(argv)
    if code != 0:
        raise SystemExit(code)


def main():
    os.chdir(CONFIGS)
    run(["identify", "--config", "identify_ref.cfg", "--out", "dataset_ref.csv"])
    run(["identify", "--config", "identify_dither.cfg", "--out", "dataset_dither.csv"])
    run(["train", "--config", "train_ref.cfg", "--out", "narx_ref.nwt"])
    run(["validate", "--config", "validate_ref.cfg"])


if __name__ == "__main__":
    main()
