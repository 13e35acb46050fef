#!/usr/bin/env python3
"""Solve a batch of random mixture-family games and report the slack spread."""

import argparse
import time

import numpy as np

from smpe.errors import NoConvergence
from smpe.kernels import random_nowak_game
from smpe.solver import SolveOptions, solve


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--instances", type=int, default=20)
    parser.add_argument("--cells", type=int, default=32)
    parser.add_argument("--j", type=int, default=2)
    parser.add_argument("--k", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--eps-target", type=float, default=1e-6)
    args = parser.parse_args()

    epsilons, times, failures = [], [], 0
    for i in range(args.instances):
        _, spec = random_nowak_game(
            seed=[args.seed, i], n_cells=args.cells, j_components=args.j, k_atoms=args.k
        )
        start = time.time()
        try:
            result = solve(spec, SolveOptions(eps_target=args.eps_target))
        except NoConvergence as err:
            result = err.result
            failures += 1
        times.append(time.time() - start)
        epsilons.append(result.epsilon)
        print(
            f"instance {i:3d}  eps {result.epsilon:10.3e}  "
            f"iters {result.diagnostics['iterations']:4d}  "
            f"restarts {result.diagnostics['restart']}  {times[-1]:5.2f}s"
        )
    eps = np.array(epsilons)
    print(
        f"\n{args.instances - failures}/{args.instances} reached eps <= "
        f"{args.eps_target:g}; median eps {np.median(eps):.3e}, "
        f"max eps {eps.max():.3e}, mean time {np.mean(times):.2f}s"
    )


if __name__ == "__main__":
    main()
