"""Compare Monte-Carlo global SHAP with exact enumeration on one artificial preset.

    python scripts/shapley_oracle.py artificial-1 --perms 100 500 2000
"""
import argparse

import numpy as np

from fisim.forest import ForestConfig, train_forest
from fisim.importance import exact_shapley, forest_score, sampled_shapley
from fisim.tabular import artificial


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("preset")
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--background", type=int, default=100)
    ap.add_argument("--perms", type=int, nargs="+", default=[100, 500, 2000])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    table = artificial(args.preset, seed=args.seed, n_rows=args.rows)
    forest = train_forest(table, ForestConfig(n_trees=50), seed=args.seed)
    score = forest_score(forest)
    rng = np.random.default_rng(args.seed)
    X = table.features()
    inst = X[rng.choice(len(X), args.instances, replace=False)]
    bg = X[rng.choice(len(X), args.background, replace=False)]
    exact = np.abs(exact_shapley(score, inst, bg)).mean(0)
    print("exact   ", " ".join(f"{v:.4f}" for v in exact))
    for n in args.perms:
        mc = np.abs(sampled_shapley(score, inst, bg, n, rng)).mean(0)
        print(f"mc {n:>5}", " ".join(f"{v:.4f}" for v in mc),
              f"  max gap {np.abs(mc - exact).max():.4f}")


if __name__ == "__main__":
    main()
