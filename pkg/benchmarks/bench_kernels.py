"""Compare the compiled and numpy Monte Carlo kernels on the vehicle platoon.

    python3 benchmarks/bench_kernels.py --blocks 100 --trials 10000
"""
import argparse
import time

import numpy as np

from pocbf import kernels
from pocbf.montecarlo import SimConfig, estimate_exit_probability
from pocbf.sysmodel import acc_platoon


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=100)
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    net = acc_platoon(args.blocks)
    cfg = dict(trials=args.trials, horizon=args.horizon, seed=0, initial="fixed", initial_point=(1.25, 0.0))
    renders = {}
    for name in kernels.AVAILABLE:
        times = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            rep = estimate_exit_probability(net, SimConfig(kernel=name, **cfg))
            times.append(time.perf_counter() - t0)
        renders[name] = rep.render().replace(f"kernel {name}", "kernel")
        steps = args.trials * args.horizon * args.blocks
        best = min(times)
        print(f"{name:>7}: best {best:.3f} s, median {np.median(times):.3f} s, {steps / best / 1e6:.1f} M block-steps/s")
    if len(renders) > 1:
        same = len(set(renders.values())) == 1
        print("reports identical across kernels:", same)
    else:
        print("compiled kernel not built; only the numpy kernel was timed")


if __name__ == "__main__":
    main()
