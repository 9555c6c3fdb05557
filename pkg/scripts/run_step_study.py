#!/usr/bin/env python3
"""Voltage-tracking comparison: neural loop vs the conventional exciter.

Simulates the 0.1 pu reference step at the nominal point under both
controllers plus the far-operating-point step, writes the traces next to
this script and prints tracking errors one second after each step.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

from smibctrl.cli import cli_dispatch
from smibctrl.scenarios import Trace

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(HERE, os.pardir, "configs")
OUT = os.path.join(HERE, os.pardir, "results")

RUNS = [
    ("scen_step_nominal_neural.cfg", "step_nominal_neural.csv", 2.0),
    ("scen_step_nominal_st1a.cfg", "step_nominal_st1a.csv", 2.0),
    ("scen_step_far_neural.cfg", "step_far_neural.csv", 2.0),
]


def main():
    os.makedirs(OUT, exist_ok=True)
    for scenario, out_name, t_eval in RUNS:
        out = os.path.join(OUT, out_name)
        code = cli_dispatch(["simulate", "--config", os.path.join(CONFIGS, scenario),
                             "--out", out])
        if code != 0:
            raise SystemExit(code)
        trace = Trace.from_csv(out)
        k = trace.at_time(t_eval)
        err = 100.0 * abs(trace.v_t[k] - trace.v_ref[k]) / trace.v_ref[k]
        print(f"{scenario}: tracking error {err:.4f} % at t = {t_eval} s")
    cli_dispatch(["compare",
                  os.path.join(OUT, "step_nominal_neural.csv"),
                  os.path.join(OUT, "step_nominal_st1a.csv"),
                  "--out", os.path.join(OUT, "step_nominal_diff.csv")])


if __name__ == "__main__":
    main()
