import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from fisim.bench import (DEFAULT_EPSILONS, METRICS, RUN_COLUMNS, DatasetSpec, ExperimentConfig,
                         ImportanceSettings, RunResult, SynthesizerSpec, derive_seed, emit_report,
                         load_runs_csv, read_importance_csv, run_experiment, seed_from_env,
                         summarize, write_importance_csv)
from fisim.errors import ConfigError, SizeError
from fisim.forest import ForestConfig
from fisim.importance import ImportanceVector
from fisim.tabular import ARTIFICIAL


def tiny_config(**kw):
    base = dict(
        dataset=DatasetSpec("a1", replace(ARTIFICIAL["artificial-1"], n_rows=200)),
        synthesizers=(SynthesizerSpec("privbayes"),),
        repeats_outer=2,
        forest=ForestConfig(n_trees=5),
        importance=ImportanceSettings(measure="mdi"),
    )
    base.update(kw)
    return ExperimentConfig(**base)


def result(method="m", eps=1.0, rbo=0.5, status="ok", j=0):
    metrics = {m: None for m in METRICS}
    metrics["rbo"] = rbo
    return RunResult(f"d/{method}/{eps}/{j}", "d", method, eps, j, 0, 0, status,
                     metrics=metrics if status == "ok" else {m: None for m in METRICS})


@pytest.fixture(scope="module")
def sweep():
    return run_experiment(tiny_config(repeats_outer=25, epsilon_grid=DEFAULT_EPSILONS))


# -- config -----------------------------------------------------------------

def test_config_invariants():
    with pytest.raises(ConfigError):
        tiny_config(epsilon_grid=())
    with pytest.raises(ConfigError):
        tiny_config(epsilon_grid=(0.0,))
    with pytest.raises(ConfigError):
        tiny_config(repeats_outer=0)
    with pytest.raises(ConfigError):
        tiny_config(synthesizers=(SynthesizerSpec("subsample"), SynthesizerSpec("subsample")))
    with pytest.raises(ConfigError):
        SynthesizerSpec("ctgan")
    with pytest.raises(ConfigError):
        DatasetSpec("x")
    # baselines alone need no epsilon grid
    assert len(tiny_config(synthesizers=(SynthesizerSpec("resample_columns"),),
                           epsilon_grid=()).work_items()) == 2


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, "privbayes", 0.1, 3, 0) == derive_seed(0, "privbayes", 0.1, 3, 0)
    assert derive_seed(0, "privbayes", 0.1, 3, 0) != derive_seed(0, "privbayes", 0.1, 3, 1)
    assert 0 <= derive_seed(1, 2) < 2 ** 63


def test_fisim_seed_override(monkeypatch):
    cfg = tiny_config()
    monkeypatch.delenv("FISIM_SEED", raising=False)
    assert seed_from_env(cfg).master_seed == 0
    monkeypatch.setenv("FISIM_SEED", "42")
    assert seed_from_env(cfg).master_seed == 42
    monkeypatch.setenv("FISIM_SEED", "forty")
    with pytest.raises(ConfigError):
        seed_from_env(cfg)


# -- runner -----------------------------------------------------------------

def test_sweep_has_one_result_per_item(sweep, tmp_path):
    assert len(sweep) == 200
    assert all(r.spent_epsilon == r.epsilon for r in sweep)
    assert len({r.run_id for r in sweep}) == 200
    emit_report(summarize(sweep), sweep, tmp_path)
    with open(tmp_path / "runs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 200 and list(rows[0]) == list(RUN_COLUMNS)


def test_sweep_results_satisfy_invariants(sweep):
    for r in sweep:
        if not r.ok:
            assert r.error and all(v is None for v in r.metrics.values())
            continue
        assert 0.0 <= r.metrics["auc_original"] <= 1.0 and 0.0 <= r.metrics["auc_synthetic"] <= 1.0
        m = r.metrics
        assert m["rbo_cor"] >= m["rbo_per"] - 1e-9 >= m["rbo"] - 2e-9
        assert m["perm_rbo_cor"] >= m["perm_rbo"] - 1e-9


def test_real_side_is_shared_across_methods():
    cfg = tiny_config(synthesizers=(SynthesizerSpec("privbayes"), SynthesizerSpec("resample_columns")),
                      epsilon_grid=(1.0,))
    res = run_experiment(cfg)
    assert [r.method for r in res] == ["privbayes"] * 2 + ["resample_columns"] * 2
    assert res[2].epsilon is None and res[2].spent_epsilon is None
    assert res[2].run_id == "a1/resample_columns/eps=-/j=0/i=0"


def test_failures_are_recorded_not_raised():
    # 12 rows: the 70/30 split leaves a validation set too small for one of the classes
    cfg = tiny_config(dataset=DatasetSpec("t", replace(ARTIFICIAL["artificial-1"], n_rows=9)),
                      epsilon_grid=(1.0,))
    res = run_experiment(cfg)
    assert len(res) == 2 and all(r.status == "failed" for r in res)
    assert all("\n" not in r.error and "SizeError" in r.error for r in res)


def test_inner_repeats():
    res = run_experiment(tiny_config(epsilon_grid=(1.0,), repeats_inner=3, repeats_outer=1))
    assert [r.inner for r in res] == [0, 1, 2]
    assert len({r.seed for r in res}) == 3


def test_parallel_equals_serial():
    cfg = tiny_config(epsilon_grid=(0.1, 10.0))
    a = run_experiment(cfg, jobs=1)
    b = run_experiment(cfg, jobs=3)
    assert [(r.run_id, r.metrics) for r in a] == [(r.run_id, r.metrics) for r in b]


def test_recipe_and_measures_run():
    from fisim.featgen import FeatureRecipe
    spec = replace(ARTIFICIAL["artificial-4"], n_rows=300, n_informative=3)
    for measure in ("mdi", "pfi", "shap"):
        cfg = tiny_config(dataset=DatasetSpec("a4", spec), epsilon_grid=(1.0,), repeats_outer=1,
                          recipe=FeatureRecipe(("multiply",)),
                          importance=ImportanceSettings(measure=measure, n_permutations=5,
                                                        max_instances=20, max_background=20))
        (r,) = run_experiment(cfg)
        assert r.ok, r.error
        assert len(r.importance_original.feature_names) == 6
        assert r.importance_original.measure == measure


# -- summarize --------------------------------------------------------------

def test_summarize_examples():
    (s,) = [x for x in summarize([result(rbo=0.4), result(rbo=0.6, j=1)]) if x.metric == "rbo"]
    assert s.mean == pytest.approx(0.5) and s.sd == pytest.approx(np.sqrt(0.02)) and s.n == 2
    (s,) = [x for x in summarize([result(rbo=0.7)]) if x.metric == "rbo"]
    assert (s.mean, s.sd, s.n) == (0.7, 0.0, 1)
    with pytest.raises(SizeError):
        summarize([])


def test_summarize_never_mixes_epsilons_and_drops_failures():
    res = [result(eps=0.1, rbo=0.2), result(eps=1.0, rbo=0.8), result(eps=0.1, rbo=0.4, j=1),
           result(eps=0.1, status="failed", j=2)]
    rows = {(s.epsilon, s.metric): s for s in summarize(res)}
    assert rows[(0.1, "rbo")].mean == pytest.approx(0.3) and rows[(0.1, "rbo")].n == 2
    assert rows[(1.0, "rbo")].mean == 0.8


def test_summary_sd_matches_numpy(sweep):
    by = {}
    for r in sweep:
        if r.ok:
            by.setdefault(r.epsilon, []).append(r.metrics["cosine"])
    for s in summarize(sweep):
        if s.metric == "cosine":
            assert s.mean == pytest.approx(np.mean(by[s.epsilon]), abs=1e-12)
            assert s.sd == pytest.approx(np.std(by[s.epsilon], ddof=1), abs=1e-12)


# -- reports ----------------------------------------------------------------

def test_emit_report_files_and_determinism(tmp_path):
    res = run_experiment(tiny_config(epsilon_grid=(1.0,)))
    h1 = emit_report(summarize(res), res, tmp_path / "a")
    h2 = emit_report(summarize(res), res, tmp_path / "b")
    assert h1 == h2
    assert set(h1) == {"runs.csv", "summary.csv", "importance_profiles.csv", "similarities.csv",
                       "importances.csv", "runs.json", "summary.json", "importance_profiles.json"}
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert {e["name"]: e["sha256"] for e in manifest["files"]} == h1
    assert emit_report(summarize(res), res, tmp_path / "c", formats=("json",)).keys() == \
        {"runs.json", "summary.json", "importance_profiles.json"}


def test_emit_report_errors(tmp_path):
    with pytest.raises(SizeError):
        emit_report([], [result()], tmp_path / "x")
    assert not (tmp_path / "x").exists()
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        emit_report(summarize([result()]), [result()], blocker / "sub")
    with pytest.raises(ConfigError):
        emit_report(summarize([result()]), [result()], tmp_path / "y", formats=("xml",))


def test_runs_csv_round_trip(tmp_path):
    res = run_experiment(tiny_config(epsilon_grid=(1.0,)))
    emit_report(summarize(res), res, tmp_path)
    back = load_runs_csv(tmp_path / "runs.csv")
    assert [(r.run_id, r.metrics, r.seed) for r in back] == [(r.run_id, r.metrics, r.seed) for r in res]
    emit_report(summarize(back), back, tmp_path / "again", formats=("csv",))
    assert (tmp_path / "again" / "summary.csv").read_bytes() == (tmp_path / "summary.csv").read_bytes()


def test_importance_csv_round_trip(tmp_path):
    iv = ImportanceVector(("a", "b"), [0.25, 0.75], "mdi")
    write_importance_csv(iv, tmp_path / "i.csv")
    back = read_importance_csv(tmp_path / "i.csv")
    assert back.feature_names == iv.feature_names and back.measure == "mdi"
    assert np.array_equal(back.scores, iv.scores)
    (tmp_path / "bad.csv").write_text("feature,score\na,x\n")
    with pytest.raises(ConfigError):
        read_importance_csv(tmp_path / "bad.csv")


@pytest.mark.slow
def test_privbayes_artificial_5_high_epsilon():
    cfg = ExperimentConfig(DatasetSpec("artificial-5", ARTIFICIAL["artificial-5"]),
                           (SynthesizerSpec("privbayes"),), epsilon_grid=(10.0,), repeats_outer=25)
    res = run_experiment(cfg)
    rbo = [r.metrics["rbo"] for r in res if r.ok]
    assert len(rbo) == 25 and np.mean(rbo) >= 0.95
