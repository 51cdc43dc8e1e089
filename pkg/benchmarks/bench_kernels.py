"""Time the compiled and numpy batch simulators on the same workload.

Usage: ``python benchmarks/bench_kernels.py [--paths 2000] [--modes 16] [--horizon 12.566]``
"""

import argparse
import math
import time

import numpy as np

from levywave import _kernels_py
from levywave.levy import LevyDensitySpec, MarkBand, TailTransform
from levywave.operators import WaveModelSpec
from levywave.spde import SigmaSpec, pack_streams, replica_streams

try:
    from levywave import _kernels
except ImportError:
    _kernels = None


def workload(paths, modes, horizon, z_cut, seed=0):
    model = WaveModelSpec(n_modes=modes, alpha_damp=0.5)
    m = model.modes
    noise = LevyDensitySpec(alpha=1.5, K0=1.5)
    streams = replica_streams(noise, MarkBand(0.0, z_cut), horizon, seed, "noise", range(paths))
    tt = TailTransform(noise)
    args = (m.kind, m.param, m.input, np.zeros((paths, m.dim)), *pack_streams(streams),
            tt.delta0, tt.alpha, SigmaSpec(c0=1.0).kernel_args(), 0, np.zeros(1), 1.0,
            np.zeros((2, m.dim)), np.zeros(1), np.zeros(1), np.zeros(8),
            np.linspace(0.0, horizon, 9)[1:])
    return args, sum(len(s) for s in streams)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--modes", type=int, default=16)
    p.add_argument("--horizon", type=float, default=4 * math.pi)
    p.add_argument("--z-cut", type=float, default=10.0)
    p.add_argument("--repeat", type=int, default=3)
    a = p.parse_args()
    args, events = workload(a.paths, a.modes, a.horizon, a.z_cut)
    print(f"{a.paths} paths, {events} events, {a.modes} modes")
    t_py, ref = best_of(_kernels_py.simulate_batch, args, a.repeat)
    print(f"python    {t_py:8.3f} s  {events / t_py:12.0f} events/s")
    if _kernels is None:
        print("compiled  unavailable (extension not built)")
        return
    t_c, out = best_of(_kernels.simulate_batch, args, a.repeat)
    dev = float(np.max(np.abs(out[0] - ref[0])))
    print(f"compiled  {t_c:8.3f} s  {events / t_c:12.0f} events/s  speedup {t_py / t_c:.1f}x")
    print(f"max state difference {dev:.2e}")


if __name__ == "__main__":
    main()
