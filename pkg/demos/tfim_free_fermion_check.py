"""Check DMRG on the transverse-field Ising chain against the free-fermion solution.

Run:  python demos/tfim_free_fermion_check.py
"""

import numpy as np

from adaptchi import ControllerConfig, DmrgConfig, run_dmrg, transverse_ising
from adaptchi.models import tfim_free_fermion_energy

N = 20

if __name__ == "__main__":
    cfg = DmrgConfig(controller=ControllerConfig(mode="pid", chi_max=64, alpha_ema=0.8, gamma_margin=8.0))
    print(f"{'h':>5} {'DMRG E/N':>15} {'exact E/N':>15} {'|dE|/N':>9} {'max chi':>8}")
    for h in np.linspace(0.2, 2.0, 7):
        res = run_dmrg(transverse_ising(N, h=h), cfg)
        exact = tfim_free_fermion_energy(N, 1.0, h)
        print(f"{h:5.2f} {res.energy / N:15.10f} {exact / N:15.10f} "
              f"{abs(res.energy - exact) / N:9.1e} {res.records[-1].max_chi:8d}")
