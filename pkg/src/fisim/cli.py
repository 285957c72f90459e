"""Command-line entry point (``fisim``)."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .association import AssociationMatrix
from .bench import (emit_report, load_runs_csv, read_importance_csv, run_experiment,
                    seed_from_env, summarize)
from .config import load_config, resolve_config_path
from .errors import FisimError
from .ranksim import RboParams, compare
from .tabular import ARTIFICIAL, artificial, write_csv, write_schema


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _formats(text: str) -> tuple[str, ...]:
    return tuple(f.strip() for f in text.split(",") if f.strip())


def cmd_run(args) -> int:
    cfg = seed_from_env(load_config(args.config))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    results = run_experiment(cfg, jobs=args.jobs)
    emit_report(summarize(results), results, args.out, _formats(args.formats))
    failed = sum(not r.ok for r in results)
    print(f"{len(results)} runs ({failed} failed) -> {args.out}")
    return 0


def cmd_summarize(args) -> int:
    results = load_runs_csv(args.runs)
    emit_report(summarize(results), results, args.out, _formats(args.formats))
    print(f"summarized {len(results)} runs -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    if args.spec in ARTIFICIAL:
        overrides = {} if args.rows is None else {"n_rows": args.rows}
        table = artificial(args.spec, args.seed, **overrides)
    else:
        cfg = load_config(resolve_config_path(args.spec))
        if cfg.dataset.artificial is not None and args.rows is not None:
            cfg = replace(cfg, dataset=replace(cfg.dataset, artificial=replace(
                cfg.dataset.artificial, n_rows=args.rows)))
        table = cfg.dataset.load(cfg.master_seed if args.seed is None else args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(table, args.out)
    if args.schema:
        write_schema(table.columns, args.schema)
    print(f"{table.n_rows} rows x {len(table.columns)} columns -> {args.out}")
    return 0


def cmd_similarity(args) -> int:
    a = read_importance_csv(args.a)
    b = read_importance_csv(args.b)
    corr = AssociationMatrix.from_csv(args.assoc) if args.assoc else \
        AssociationMatrix.identity(a.feature_names)
    rep = compare(a, b, corr, RboParams(args.p, args.k))
    for name, value in rep.metrics().items():
        print(f"{name}={'NA' if value is None else f'{value:.12g}'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fisim", description="Feature-importance similarity of synthetic data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run an experiment sweep and write its report")
    p.add_argument("--config", required=True, help="config file or bundled config name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--formats", default="csv,json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("summarize", help="re-aggregate an existing runs.csv")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--formats", default="csv,json")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("generate", help="write an artificial dataset as CSV")
    p.add_argument("--spec", required=True, help=f"one of {sorted(ARTIFICIAL)} or a config file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--schema", default=None, help="also write a column schema (TOML) here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("similarity", help="compare two importance files (feature,score)")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--assoc", default=None, help="association matrix CSV (default: identity)")
    p.add_argument("--p", type=float, default=0.8)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_similarity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is None and args.command == "generate" and \
            args.spec in ARTIFICIAL:
        args.seed = 0
    try:
        return args.func(args)
    except (FisimError, OSError) as exc:
        print(f"fisim {args.command}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
