#!/usr/bin/env python3
"""Damping and robustness studies on the reference machine.

Runs the stabilizer step comparison (damping weight 3 vs 0), the inertia
drift, the mechanical power drop and the big reference swing, then prints
damping metrics and recovery errors.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

from smibctrl.cli import cli_dispatch
from smibctrl.scenarios import Trace, damping_metric

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(HERE, os.pardir, "configs")
OUT = os.path.join(HERE, os.pardir, "results")


def simulate(scenario, out_name):
    out = os.path.join(OUT, out_name)
    code = cli_dispatch(["simulate", "--config", os.path.join(CONFIGS, scenario),
                         "--out", out])
    if code != 0:
        raise SystemExit(code)
    return Trace.from_csv(out)


def main():
    os.makedirs(OUT, exist_ok=True)

    with_pss = simulate("scen_pss_step.cfg", "pss_step_nu3.csv")
    without = simulate("scen_pss_step_nu0.cfg", "pss_step_nu0.csv")
    print(f"damping metric with stabilizer: {damping_metric(with_pss, 2.0):.4f}")
    print(f"damping metric without:         {damping_metric(without, 2.0):.4f}")

    for scenario, out_name, event_t in [("scen_h_drift.cfg", "h_drift.csv", 1.0),
                                        ("scen_pm_drop.cfg", "pm_drop.csv", 1.0)]:
        trace = simulate(scenario, out_name)
        settle = trace.t >= event_t + 3.0
        rel = np.abs(trace.v_t[settle] - trace.v_ref[settle]) / trace.v_ref[settle]
        print(f"{scenario}: max tracking error {100 * np.max(rel):.4f} % "
              f"from {event_t + 3.0:.0f} s on")

    swing = simulate("scen_big_swing.cfg", "big_swing.csv")
    err_top = 100 * abs(swing.v_t[swing.at_time(2.5)] - 2.0) / 2.0
    err_end = 100 * abs(swing.v_t[-1] - 1.1392) / 1.1392
    print(f"big swing: error {err_top:.4f} % at the 2.0 pu plateau, "
          f"{err_end:.4f} % after the return")


if __name__ == "__main__":
    main()
