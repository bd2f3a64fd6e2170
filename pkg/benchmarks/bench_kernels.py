"""Time the compiled and numpy kernel backends on identical inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from simossb import _pykernels
from simossb.environment import Environment
from simossb.prediction import PredictionHistogram
from simossb.strategies import bid_grid

try:
    from simossb import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng: np.random.Generator) -> dict:
    """Benchmark inputs keyed by kernel name: (argument tuple, description)."""
    env = Environment("U", 5, 5)
    tables = env.sample_tables(2000, rng)
    pred = PredictionHistogram(rng.dirichlet(np.ones(51), size=5))
    cum, pcum = pred.cum[None], pred.pcum[None]
    bids = rng.uniform(0, 51, (2000, 5))
    small = Environment("U", 3, 3).sample_tables(20, rng)
    small_pred = PredictionHistogram(rng.dirichlet(np.ones(51), size=3))
    samples = rng.integers(0, 51, (200, 64, 5))
    candidates = rng.uniform(0, 51, (200, 16, 5))
    return {
        "exact_eu": ((tables, bids, cum, pcum), "2000 x U[5,5]"),
        "local_bid_product": ((tables, cum, pcum, bids, 10, 1e-9), "2000 x U[5,5], K=10"),
        "optimal_grid": ((small, small_pred.cum[None], small_pred.pcum[None], bid_grid(50, 1.0)),
                         "20 x U[3,3], 52^3 grid"),
        "sample_utilities": ((tables[:200], candidates, samples), "200 x 16 candidates x 64 draws"),
        "clear": ((rng.uniform(0, 50, (20000, 5, 5)), rng.random((20000, 5))), "20000 games, n=5, m=5"),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled backend not available; only timing numpy")
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':<20}{'input':<34}" + "".join(f"{name + ' s':>12}" for name, _ in backends)
          + f"{'speedup':>10}")
    for name, (arguments, desc) in cases(np.random.default_rng(0)).items():
        times = []
        for _, mod in backends:
            fn = getattr(mod, name)
            times.append(min(timeit.repeat(lambda: fn(*arguments), number=1, repeat=args.repeat)))
        speedup = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else ""
        print(f"{name:<20}{desc:<34}" + "".join(f"{t:>12.4f}" for t in times) + speedup)


if __name__ == "__main__":
    main()
