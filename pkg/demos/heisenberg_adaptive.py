"""Fixed versus PID-controlled bond dimension on a 20-site Heisenberg chain.

Run:  python demos/heisenberg_adaptive.py
"""

from dataclasses import replace

from adaptchi import ControllerConfig, DmrgConfig, PidGains, heisenberg, run_dmrg


def main():
    spec = heisenberg(20)
    pid = ControllerConfig(mode="pid", chi_max=64, alpha_ema=0.8, gamma_margin=5.5,
                           gains=PidGains(5.0, 0.25, 1.25))
    runs = {
        "fixed chi=64": DmrgConfig(controller=replace(pid, mode="fixed")),
        "pid": DmrgConfig(controller=pid),
    }
    energies = {}
    for name, cfg in runs.items():
        res = run_dmrg(spec, cfg)
        energies[name] = res.energy / spec.n
        last = res.records[-1]
        print(f"{name:>13}: E/N = {energies[name]:.9f}  sweeps = {res.sweeps}  "
              f"time = {res.wall_time:.2f}s  avg chi = {last.average_chi:.2f}")
        print(" " * 15 + "chi profile " + " ".join(str(c) for c in last.chi_profile))
    print(f"energy difference per site: {energies['pid'] - energies['fixed chi=64']:.2e}")


if __name__ == "__main__":
    main()
