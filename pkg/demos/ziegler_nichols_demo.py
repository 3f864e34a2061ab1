"""Ziegler-Nichols tuning on a toy plant whose entropy saturates at ln(chi).

The plant stands in for a bond whose true entanglement is ln 20: below
chi = 20 the measured entropy is capped by the bond dimension itself.

Run:  python demos/ziegler_nichols_demo.py
"""

import math

from adaptchi.controller import ControllerConfig, closed_loop_chi, ziegler_nichols_tune


def plant(chi):
    return min(math.log(20.0), math.log(chi))


if __name__ == "__main__":
    report = ziegler_nichols_tune(plant, [float(k) for k in range(1, 65)])
    g = report.tuned
    print(f"ultimate gain K_u = {report.k_ultimate:g}, period T_u = {report.t_ultimate:g} sweeps")
    print(f"tuned gains: kp={g.kp:.2f} ki={g.ki:.2f} kd={g.kd:.2f}")
    traj = closed_loop_chi(plant, ControllerConfig(gains=g, chi_max=256), 20)
    print("closed-loop chi:", traj)
