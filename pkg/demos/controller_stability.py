"""Pole locations of the linearized entropy loop as the loop gain grows.

For small loop gains both closed-loop poles sit inside the unit circle; large
integral gains push one outside. The Jury test and the explicit roots agree.

Run:  python demos/controller_stability.py
"""

import numpy as np

from adaptchi.controller import PidGains, jury_stability, loop_gain_estimate

gains = PidGains()  # kp=2, ki=0.1, kd=0.5

print("loop gain of a flat spectrum (saturated bond) vs 1/chi:")
for chi in (8, 32, 128):
    print(f"  chi={chi:4d}  g={loop_gain_estimate(np.ones(chi + 1), chi):.5f}  1/chi={1 / chi:.5f}")

print("\n   g     |z|max   stable")
for g in np.geomspace(1e-3, 2.0, 12):
    rep = jury_stability(gains, g)
    print(f"{g:7.4f}  {max(rep.pole_moduli):7.4f}   {rep.stable}")

hot = PidGains(2.0, 2000.0, 0.5)
print(f"\nki=2000 at g=1/8: stable={jury_stability(hot, 1 / 8).stable}")
