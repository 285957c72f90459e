"""Repeated-run experiment driver: synthesize, engineer features, fit forests,
compare importances, aggregate, and write reports.

Every run is a pure function of the config and its position in the sweep:
seeds are hashed from ``(master_seed, method, epsilon, outer, inner)``, so
results do not depend on the number of worker processes.

Output files (column orders are fixed):

``runs.csv``
    one row per run, columns :data:`RUN_COLUMNS`.
``summary.csv``
    ``dataset, method, epsilon, metric, mean, sd, n``.
``similarities.csv``
    ``run_id, dataset, method, epsilon, seed, metric, value`` (long form of the
    similarity columns of ``runs.csv``).
``importances.csv``
    ``run_id, source, measure, feature, score`` (source is
    ``original``/``synthetic``).
``importance_profiles.csv``
    ``dataset, method, epsilon, source, feature, mean, sd, n``.
``manifest.json``
    ``{"files": [{"name", "bytes", "sha256"}, ...]}``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .association import AssociationMatrix, association_matrix
from .errors import ConfigError, SizeError
from .featgen import FeatureRecipe, apply_recipe
from .forest import ForestConfig, auc_score, predict_proba, train_forest
from .importance import MEASURES, ImportanceVector, mdi, pfi, shapley_mc
from .ranksim import RboParams, SimilarityReport, compare, permute_importance
from .synth import PrivBayesConfig, fit_privbayes, resample_columns, sample_privbayes, subsample
from .tabular import ArtificialSpec, Table, generate_artificial, load_csv, load_schema, split

DEFAULT_EPSILONS = (1e-4, 1e-3, 1e-2, 1e-1, 0.4, 1.0, 4.0, 10.0)
SYNTHESIZERS = ("privbayes", "resample_columns", "subsample")
SIMILARITY_METRICS = ("rbo", "rbo_raw", "rbo_per", "rbo_cor", "cosine")
METRICS = (*SIMILARITY_METRICS, *(f"perm_{m}" for m in SIMILARITY_METRICS),
           "auc_original", "auc_synthetic")
RUN_COLUMNS = ("run_id", "dataset", "method", "epsilon", "outer", "inner", "seed", "status",
               "error", "spent_epsilon", *METRICS)
SUMMARY_COLUMNS = ("dataset", "method", "epsilon", "metric", "mean", "sd", "n")
PROFILE_COLUMNS = ("dataset", "method", "epsilon", "source", "feature", "mean", "sd", "n")
SIMILARITY_COLUMNS = ("run_id", "dataset", "method", "epsilon", "seed", "metric", "value")
IMPORTANCE_COLUMNS = ("run_id", "source", "measure", "feature", "score")


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    tag: str
    artificial: ArtificialSpec | None = None
    csv: Path | None = None
    schema: Path | None = None
    seed: int | None = None  # generator seed; derived from master_seed when unset

    def __post_init__(self):
        if (self.artificial is None) == (self.csv is None):
            raise ConfigError("dataset needs exactly one of an artificial spec or a csv path")
        if self.csv is not None and self.schema is None:
            raise ConfigError("a csv dataset needs a schema file")
        if self.artificial is not None:
            self.artificial.validate()

    def load(self, master_seed: int) -> Table:
        if self.artificial is not None:
            seed = self.seed if self.seed is not None else derive_seed(master_seed, "dataset", self.tag)
            return generate_artificial(self.artificial, seed)
        return load_csv(self.csv, load_schema(self.schema))


@dataclass(frozen=True)
class SynthesizerSpec:
    kind: str
    k_parents: int = 3
    beta: float = 0.5
    n_bins: int = 10
    fraction: float = 1.0
    name: str | None = None

    def __post_init__(self):
        if self.kind not in SYNTHESIZERS:
            raise ConfigError(f"unknown synthesizer {self.kind!r}; valid: {list(SYNTHESIZERS)}")
        if self.kind == "privbayes":
            PrivBayesConfig(1.0, self.k_parents, self.beta, self.n_bins)
        if self.kind == "subsample" and not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"subsample fraction must lie in (0, 1], got {self.fraction}")

    @property
    def tag(self) -> str:
        return self.name or self.kind

    @property
    def private(self) -> bool:
        return self.kind == "privbayes"


@dataclass(frozen=True)
class ImportanceSettings:
    measure: str = "shap"
    n_permutations: int = 100
    max_instances: int | None = 200
    max_background: int | None = 100
    pfi_repeats: int = 5

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ConfigError(f"unknown importance measure {self.measure!r}; valid: {list(MEASURES)}")
        if self.n_permutations < 1 or self.pfi_repeats < 1:
            raise ConfigError("n_permutations and pfi_repeats must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    synthesizers: tuple[SynthesizerSpec, ...]
    epsilon_grid: tuple[float, ...] = DEFAULT_EPSILONS
    repeats_outer: int = 25
    repeats_inner: int = 1
    train_frac: float = 0.7
    forest: ForestConfig = ForestConfig()
    rbo_params: RboParams = RboParams()
    importance: ImportanceSettings = ImportanceSettings()
    recipe: FeatureRecipe | None = None
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "synthesizers", tuple(self.synthesizers))
        object.__setattr__(self, "epsilon_grid", tuple(float(e) for e in self.epsilon_grid))
        if not self.synthesizers:
            raise ConfigError("at least one synthesizer is required")
        tags = [s.tag for s in self.synthesizers]
        if len(set(tags)) != len(tags):
            raise ConfigError(f"synthesizer tags must be unique, got {tags}")
        if any(s.private for s in self.synthesizers):
            if not self.epsilon_grid:
                raise ConfigError("epsilon_grid must be nonempty for privbayes")
            if any(not (e > 0 and math.isfinite(e)) for e in self.epsilon_grid):
                raise ConfigError("epsilon values must be positive and finite")
        if self.repeats_outer < 1 or self.repeats_inner < 1:
            raise ConfigError("repeats_outer and repeats_inner must be >= 1")
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigError("train_frac must lie in (0, 1)")

    def with_seed(self, master_seed: int) -> "ExperimentConfig":
        return replace(self, master_seed=int(master_seed))

    def work_items(self) -> list[tuple[SynthesizerSpec, float | None, int]]:
        items = []
        for synth in self.synthesizers:
            for eps in (self.epsilon_grid if synth.private else (None,)):
                items += [(synth, eps, j) for j in range(self.repeats_outer)]
        return items


def seed_from_env(cfg: ExperimentConfig) -> ExperimentConfig:
    """Apply the ``FISIM_SEED`` override, if set."""
    raw = os.environ.get("FISIM_SEED")
    if raw is None or raw.strip() == "":
        return cfg
    try:
        return cfg.with_seed(int(raw))
    except ValueError:
        raise ConfigError(f"FISIM_SEED must be an integer, got {raw!r}") from None


def derive_seed(*parts) -> int:
    text = "\x1f".join(repr(float(p)) if isinstance(p, float) else repr(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


# -- results ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RunResult:
    run_id: str
    dataset: str
    method: str
    epsilon: float | None
    outer: int
    inner: int
    seed: int
    status: str = "ok"
    error: str = ""
    spent_epsilon: float | None = None
    metrics: dict = field(default_factory=dict)
    similarity: SimilarityReport | None = None
    permuted: SimilarityReport | None = None
    importance_original: ImportanceVector | None = None
    importance_synthetic: ImportanceVector | None = None

    def __post_init__(self):
        if self.status not in ("ok", "failed"):
            raise ConfigError(f"unknown run status {self.status!r}")
        for key in ("auc_original", "auc_synthetic"):
            v = self.metrics.get(key)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ConfigError(f"{key} outside [0, 1]: {v}")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _run_id(dataset, method, eps, j, inner) -> str:
    return f"{dataset}/{method}/eps={'-' if eps is None else repr(eps)}/j={j}/i={inner}"


def _importance(forest, tables, settings: ImportanceSettings, seed) -> ImportanceVector:
    if settings.measure == "mdi":
        return mdi(forest)
    if settings.measure == "pfi":
        return pfi(forest, tables.validation, settings.pfi_repeats, seed)
    return shapley_mc(forest, tables.validation, tables.train, settings.n_permutations, seed,
                      settings.max_instances, settings.max_background)


def _one_line(exc: BaseException) -> str:
    return " ".join(f"{type(exc).__name__}: {exc}".split())


@dataclass(frozen=True, eq=False)
class _Context:
    config: ExperimentConfig
    real: Table  # synthesizers fit on this
    engineered: Table  # real table after the recipe
    corr: AssociationMatrix  # over the engineered real features


def _sampler(ctx: _Context, synth: SynthesizerSpec, eps, seed):
    if synth.kind == "privbayes":
        net = fit_privbayes(ctx.real, PrivBayesConfig(eps, synth.k_parents, synth.beta,
                                                      synth.n_bins), seed)
        return (lambda s: sample_privbayes(net, ctx.real.n_rows, s)), net.spent_epsilon
    if synth.kind == "resample_columns":
        return (lambda s: resample_columns(ctx.real, s)), None
    return (lambda s: subsample(ctx.real, synth.fraction, s)), None


def _one_run(ctx: _Context, sample, spent, synth, eps, j, inner) -> RunResult:
    cfg = ctx.config
    seed = derive_seed(cfg.master_seed, synth.tag, eps, j, inner)
    base = dict(run_id=_run_id(cfg.dataset.tag, synth.tag, eps, j, inner), dataset=cfg.dataset.tag,
                method=synth.tag, epsilon=eps, outer=j, inner=inner, seed=seed,
                spent_epsilon=spent)
    try:
        s = np.random.SeedSequence(seed).generate_state(8, dtype=np.uint64).tolist()
        real = ctx.engineered
        syn = apply_recipe(sample(s[0]), cfg.recipe)
        real_split = split(real, cfg.train_frac, s[1])
        syn_split = split(syn, cfg.train_frac, s[2])
        real_forest = train_forest(real_split.train, cfg.forest, s[3])
        syn_forest = train_forest(syn_split.train, cfg.forest, s[4])
        imp_real = _importance(real_forest, real_split, cfg.importance, s[5])
        imp_syn = _importance(syn_forest, syn_split, cfg.importance, s[6])
        holdout, y = real_split.validation, real_split.validation.labels()
        auc_real = auc_score(predict_proba(real_forest, holdout), y)
        auc_syn = auc_score(predict_proba(syn_forest, holdout), y)
        sim = compare(imp_real, imp_syn, ctx.corr, cfg.rbo_params)
        perm = compare(imp_real, permute_importance(imp_syn, s[7]), ctx.corr, cfg.rbo_params)
    except Exception as exc:  # recorded, never fatal to the sweep
        return RunResult(status="failed", error=_one_line(exc), **base)
    metrics = {**sim.metrics(), **{f"perm_{k}": v for k, v in perm.metrics().items()},
               "auc_original": auc_real, "auc_synthetic": auc_syn}
    return RunResult(metrics=metrics, similarity=sim, permuted=perm, importance_original=imp_real,
                     importance_synthetic=imp_syn, **base)


def _run_item(ctx: _Context, synth: SynthesizerSpec, eps, j) -> list[RunResult]:
    cfg = ctx.config
    try:
        sample, spent = _sampler(ctx, synth, eps, derive_seed(cfg.master_seed, synth.tag, eps, j,
                                                               "fit"))
    except Exception as exc:
        return [RunResult(
            run_id=_run_id(cfg.dataset.tag, synth.tag, eps, j, i), dataset=cfg.dataset.tag,
            method=synth.tag, epsilon=eps, outer=j, inner=i,
            seed=derive_seed(cfg.master_seed, synth.tag, eps, j, i), status="failed",
            error=_one_line(exc)) for i in range(cfg.repeats_inner)]
    # one fitted model serves every inner repeat; sampling spends no extra budget
    return [_one_run(ctx, sample, spent, synth, eps, j, i) for i in range(cfg.repeats_inner)]


_WORKER_CTX: _Context | None = None


def _init_worker(ctx: _Context) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker(item) -> list[RunResult]:
    return _run_item(_WORKER_CTX, *item)


def prepare(config: ExperimentConfig) -> _Context:
    real = config.dataset.load(config.master_seed)
    engineered = apply_recipe(real, config.recipe)
    return _Context(config, real, engineered, association_matrix(engineered))


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[RunResult]:
    """Execute the full sweep; results come back in sweep order
    (synthesizer, epsilon, outer repeat, inner repeat) whatever ``jobs`` is."""
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    ctx = prepare(config)
    items = config.work_items()
    if jobs == 1 or len(items) == 1:
        batches = [_run_item(ctx, *item) for item in items]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(ctx,)) as pool:
            batches = list(pool.map(_worker, items, chunksize=1))
    return [r for batch in batches for r in batch]


# -- aggregation ------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    dataset: str
    method: str
    epsilon: float | None
    metric: str
    mean: float
    sd: float
    n: int


def _mean_sd(values: list[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    sd = float(a.std(ddof=1)) if len(a) > 1 else 0.0
    return float(a.mean()), sd


def _group_key(r: RunResult):
    return r.dataset, r.method, r.epsilon


def _ordered_groups(results: Iterable[RunResult]) -> dict:
    groups: dict = {}
    for r in results:
        groups.setdefault(_group_key(r), []).append(r)
    return groups


def summarize(results: list[RunResult]) -> list[Summary]:
    """Mean and sample SD per (dataset, method, epsilon, metric) over
    successful runs; groups follow first appearance in ``results``."""
    if not results:
        raise SizeError("cannot summarize an empty result list")
    out = []
    for (dataset, method, eps), runs in _ordered_groups(results).items():
        for metric in METRICS:
            vals = [r.metrics[metric] for r in runs if r.ok and r.metrics.get(metric) is not None]
            if vals:
                mean, sd = _mean_sd(vals)
                out.append(Summary(dataset, method, eps, metric, mean, sd, len(vals)))
    return out


def importance_profiles(results: list[RunResult]) -> list[dict]:
    rows = []
    for (dataset, method, eps), runs in _ordered_groups(results).items():
        for source in ("original", "synthetic"):
            vecs = [getattr(r, f"importance_{source}") for r in runs if r.ok]
            vecs = [v.as_dict() for v in vecs if v is not None]
            if not vecs:
                continue
            for feat in vecs[0]:
                mean, sd = _mean_sd([v[feat] for v in vecs])
                rows.append(dict(dataset=dataset, method=method, epsilon=eps, source=source,
                                 feature=feat, mean=mean, sd=sd, n=len(vecs)))
    return rows


# -- serialization ----------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(columns, rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def run_row(r: RunResult) -> dict:
    row = {c: getattr(r, c) for c in RUN_COLUMNS if c not in METRICS}
    row.update({m: r.metrics.get(m) for m in METRICS})
    return row


def _run_json(r: RunResult) -> dict:
    doc = run_row(r)
    doc["importance"] = {src: getattr(r, f"importance_{src}").as_dict()
                         for src in ("original", "synthetic")
                         if getattr(r, f"importance_{src}") is not None}
    return doc


def _dumps(doc) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def emit_report(summaries: list[Summary], results: list[RunResult], out_dir,
                formats=("csv", "json")) -> dict[str, str]:
    """Write the report files and ``manifest.json``; returns name -> sha256."""
    if not summaries:
        raise SizeError("no summaries to report (every run failed or no runs were given)")
    formats = tuple(formats)
    bad = set(formats) - {"csv", "json"}
    if bad or not formats:
        raise ConfigError(f"formats must be a nonempty subset of ['csv', 'json'], got {formats}")
    summary_rows = [s.__dict__ for s in summaries]
    profiles = importance_profiles(results)
    files: dict[str, str] = {}
    if "csv" in formats:
        files["runs.csv"] = _csv_text(RUN_COLUMNS, map(run_row, results))
        files["summary.csv"] = _csv_text(SUMMARY_COLUMNS, summary_rows)
        files["importance_profiles.csv"] = _csv_text(PROFILE_COLUMNS, profiles)
        files["similarities.csv"] = _csv_text(SIMILARITY_COLUMNS, (
            dict(run_id=r.run_id, dataset=r.dataset, method=r.method, epsilon=r.epsilon,
                 seed=r.seed, metric=m, value=r.metrics[m])
            for r in results if r.ok for m in METRICS[:-2] if r.metrics.get(m) is not None))
        files["importances.csv"] = _csv_text(IMPORTANCE_COLUMNS, (
            dict(run_id=r.run_id, source=src, measure=iv.measure, feature=f, score=s)
            for r in results for src in ("original", "synthetic")
            if (iv := getattr(r, f"importance_{src}")) is not None
            for f, s in iv.as_dict().items()))
    if "json" in formats:
        files["runs.json"] = _dumps([_run_json(r) for r in results])
        files["summary.json"] = _dumps(summary_rows)
        files["importance_profiles.json"] = _dumps(profiles)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    entries = []
    for name in sorted(files):
        data = files[name].encode("utf-8")
        (out / name).write_bytes(data)
        digests[name] = hashlib.sha256(data).hexdigest()
        entries.append({"name": name, "bytes": len(data), "sha256": digests[name]})
    (out / "manifest.json").write_text(_dumps({"files": entries}), encoding="utf-8")
    return digests


def _parse(v: str, kind):
    return None if v == "" else kind(v)


def load_runs_csv(path) -> list[RunResult]:
    """Read a ``runs.csv`` back (metrics only; importance vectors are not
    part of that file)."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise SizeError(f"{path}: no such file") from None
    with fh:
        reader = csv.DictReader(fh)
        missing = set(RUN_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for row in reader:
            out.append(RunResult(
                run_id=row["run_id"], dataset=row["dataset"], method=row["method"],
                epsilon=_parse(row["epsilon"], float), outer=int(row["outer"]),
                inner=int(row["inner"]), seed=int(row["seed"]), status=row["status"],
                error=row["error"], spent_epsilon=_parse(row["spent_epsilon"], float),
                metrics={m: _parse(row[m], float) for m in METRICS}))
    return out


def write_importance_csv(iv: ImportanceVector, path) -> None:
    Path(path).write_text(_csv_text(("measure", "feature", "score"), (
        {"measure": iv.measure, "feature": f, "score": s} for f, s in iv.as_dict().items())),
        encoding="utf-8")


def read_importance_csv(path) -> ImportanceVector:
    """Read one importance vector from a CSV with ``feature`` and ``score``
    columns (``measure`` optional, default ``shap``). Rows of an
    ``importances.csv`` report qualify as long as they belong to a single
    (run_id, source)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise SizeError(f"{path}: no such file") from None
    reader = csv.DictReader(io.StringIO(text))
    if not {"feature", "score"} <= set(reader.fieldnames or ()):
        raise ConfigError(f"{path}: expected columns 'feature' and 'score', got {reader.fieldnames}")
    rows = list(reader)
    if not rows:
        raise SizeError(f"{path}: no importance rows")
    for key in ("run_id", "source", "measure"):
        if len({r.get(key) for r in rows}) > 1:
            raise ConfigError(f"{path}: rows mix several values of {key!r}; split the file first")
    try:
        scores = [float(r["score"]) for r in rows]
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed score ({exc})") from None
    return ImportanceVector([r["feature"] for r in rows], scores, rows[0].get("measure") or "shap")
