"""Compare the numba and numpy code paths of the cell kernels and a full FOM run.

Usage::

    python3 benchmarks/bench_kernels.py [--cells 100000] [--repeat 20]

The FOM comparison runs the diamond network once per path in a subprocess,
because the path is fixed at import time by ``NETMOR_DISABLE_NUMBA``.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from netmor import kernels
from netmor.physics import PhysicsConfig

FOM_SNIPPET = """
import time
from netmor import sim
from netmor.fem import build_model
from netmor.scenarios import diamond_network, diamond_scenario
net = diamond_network()
sc = sim.scenario_from_dict(diamond_scenario(T_hours=0.5), net)
fm = build_model(net, sc.dx_max)
fom = sim.fom_system(fm, sc.physics)
x0 = sim.solve_steady(fom, sc)
sim.simulate(fom, sc.with_dt(sc.dt), x0)  # warm-up (JIT compile / cache load)
t0 = time.perf_counter()
sim.simulate(fom, sc, x0)
print(time.perf_counter() - t0)
"""


def bench_cells(n: int, repeat: int) -> None:
    rng = np.random.default_rng(0)
    cfg = PhysicsConfig(friction=0.002)
    rho = rng.uniform(40.0, 70.0, n)
    mL, mR = rng.uniform(-300.0, 300.0, (2, n))
    dx = np.full(n, 200.0)
    wt = rng.uniform(0.5, 1.5, n)
    fc = np.full(n, 0.001)
    for name, fn in (("cell_terms", kernels.cell_terms), ("cell_energy", kernels.cell_energy)):
        fn(cfg, rho, mL, mR, dx, wt, fc, use_numba=True)  # compile
        t = {}
        for use in (True, False):
            t[use] = min(timeit.repeat(lambda: fn(cfg, rho, mL, mR, dx, wt, fc, use_numba=use),
                                       number=1, repeat=repeat))
        print(f"{name:12s} n={n:7d}  numba {1e3 * t[True]:8.3f} ms  numpy {1e3 * t[False]:8.3f} ms"
              f"  speedup {t[False] / t[True]:5.2f}x")


def bench_fom() -> None:
    times = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, NETMOR_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", FOM_SNIPPET], env=env, check=True,
                             capture_output=True, text=True)
        times[label] = float(out.stdout.strip().splitlines()[-1])
    print(f"diamond FOM, 30 min  numba {times['numba']:.2f} s  numpy {times['numpy']:.2f} s")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cells", type=int, nargs="+", default=[1000, 10000, 100000])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--skip-fom", action="store_true")
    args = p.parse_args()
    for n in args.cells:
        bench_cells(n, args.repeat)
    if not args.skip_fom:
        bench_fom()


if __name__ == "__main__":
    main()
