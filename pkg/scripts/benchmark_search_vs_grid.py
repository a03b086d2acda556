"""Compare population search against exhaustive grid on the synthetic objective.

    python scripts/benchmark_search_vs_grid.py --seeds 20 --noise 0 0.005 0.01
"""

import argparse
import time

from faps.geometry import SearchSpace
from faps.search import SearchConfig, run_search
from faps.trainers import SyntheticTrainer, SyntheticTrainerConfig, run_grid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.005])
    ap.add_argument("--population", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--mode", choices=["seq", "async"], default="seq")
    args = ap.parse_args()

    space = SearchSpace()
    print("noise,grid_best,grid_steps,search_steps,hits,seeds,seconds")
    for sigma in args.noise:
        trainer = SyntheticTrainer(SyntheticTrainerConfig(noise_sigma=sigma))
        grid = run_grid(space, trainer, epochs=args.epochs)
        t0 = time.perf_counter()
        hits = steps = 0
        for seed in range(args.seeds):
            cfg = SearchConfig(population_size=args.population, total_epochs=args.epochs, seed=seed, mode=args.mode)
            res = run_search(cfg, space, trainer)
            steps = res.trainer_steps
            dm = abs(res.best_policy.m - grid.best_policy.m)
            dd = abs(res.best_policy.delta - grid.best_policy.delta)
            hits += dm <= space.s_m and dd <= space.s_delta
        dt = time.perf_counter() - t0
        gb = grid.best_policy
        print(f"{sigma},{gb.m}/{gb.delta},{grid.trainer_steps},{steps},{hits},{args.seeds},{dt:.2f}")


if __name__ == "__main__":
    main()
