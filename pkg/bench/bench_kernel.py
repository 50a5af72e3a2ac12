"""Compare the compiled theta kernel with the numpy fallback.

    python3 bench/bench_kernel.py [--sizes 100,1000,10000] [--orders 0,3,9] [--repeat 5]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from elliptic_dkp import theta


def sample(n, tau, rng):
    return rng.uniform(0, 1, n) + 1j * rng.uniform(0, tau.imag, n)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="100,1000,10000")
    ap.add_argument("--orders", default="0,3,9")
    ap.add_argument("--tau", type=float, default=1.0)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = theta.available_backends()
    tau = 1j * args.tau
    rng = np.random.default_rng(0)
    print(f"backends: {', '.join(backends)}  tau = {tau}")
    print(f"{'n':>7} {'order':>5} " + " ".join(f"{b:>12}" for b in backends) + "   speedup  max|diff|")
    for n in (int(s) for s in args.sizes.split(",")):
        u = sample(n, tau, rng)
        taus = np.full(n, tau)
        for order in (int(s) for s in args.orders.split(",")):
            times, outs = {}, {}
            for b in backends:
                fn = theta._BACKENDS[b]
                outs[b] = fn(u, taus, order, theta.SERIES_TOL)
                number = max(1, int(2e5 // n))
                times[b] = min(timeit.repeat(lambda: fn(u, taus, order, theta.SERIES_TOL), number=number,
                                             repeat=args.repeat)) / number
            row = " ".join(f"{times[b] * 1e3:>10.3f}ms" for b in backends)
            if len(backends) > 1:
                speed = times["python"] / times["compiled"]
                scale = np.maximum(1.0, np.abs(outs["python"]))
                diff = float(np.max(np.abs(outs["python"] - outs["compiled"]) / scale))
                row += f"   {speed:7.2f}x  {diff:.1e}"
            print(f"{n:>7} {order:>5} {row}")


if __name__ == "__main__":
    main()
