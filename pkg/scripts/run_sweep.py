"""Run a sweep from a config (bundled name or file) and print a per-epsilon table.

    python scripts/run_sweep.py artificial-5 --out runs/a5 --repeats 10 --eps 0.1,1,10
"""
import argparse
from dataclasses import replace

from fisim.bench import emit_report, run_experiment, seed_from_env, summarize
from fisim.config import load_config

SHOWN = ("rbo", "rbo_cor", "cosine", "perm_rbo", "auc_original", "auc_synthetic")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--out", default=None, help="also write the full report here")
    ap.add_argument("--repeats", type=int, default=None, help="override repeats_outer")
    ap.add_argument("--eps", default=None, help="comma-separated epsilon grid override")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = seed_from_env(load_config(args.config))
    if args.repeats is not None:
        cfg = replace(cfg, repeats_outer=args.repeats)
    if args.eps:
        cfg = replace(cfg, epsilon_grid=tuple(float(e) for e in args.eps.split(",")))
    results = run_experiment(cfg, jobs=args.jobs)
    summaries = summarize(results)
    if args.out:
        emit_report(summaries, results, args.out)

    cells = {(s.method, s.epsilon, s.metric): s for s in summaries}
    keys = list(dict.fromkeys((s.method, s.epsilon) for s in summaries))
    print(f"{'method':<18}{'eps':>8}" + "".join(f"{m:>16}" for m in SHOWN))
    for method, eps in keys:
        row = f"{method:<18}{'-' if eps is None else f'{eps:g}':>8}"
        for m in SHOWN:
            s = cells.get((method, eps, m))
            row += f"{'':>16}" if s is None else f"{s.mean:>9.3f} ±{s.sd:5.3f}"
        print(row)
    failed = [r for r in results if not r.ok]
    print(f"{len(results)} runs, {len(failed)} failed")
    for r in failed[:5]:
        print(f"  {r.run_id}: {r.error}")


if __name__ == "__main__":
    main()
