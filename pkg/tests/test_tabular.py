import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisim.association import pearson
from fisim.errors import ConfigError, IngestionError, SchemaError, SizeError
from fisim.tabular import (ARTIFICIAL, ArtificialSpec, Column, Table, apply_bins, artificial,
                           discretize, generate_artificial, load_csv, load_schema, quantile_bins,
                           split, write_csv, write_schema)


def small_table(n=10):
    cols = (Column.continuous("a"), Column.categorical("b", 3),
            Column.categorical("y", 2, is_target=True))
    data = np.column_stack([np.arange(n) * 1.5, np.arange(n) % 3, np.arange(n) % 2])
    return Table(cols, data)


# -- schema -----------------------------------------------------------------

def test_schema_rejects_duplicate_names_and_missing_target():
    with pytest.raises(SchemaError):
        Table((Column.continuous("a"), Column.continuous("a"),
               Column.categorical("y", 2, True)), np.zeros((1, 3)))
    with pytest.raises(SchemaError):
        Table((Column.continuous("a"),), np.zeros((1, 1)))
    with pytest.raises(SchemaError):
        Table((Column.categorical("y", 2, True), Column.categorical("z", 2, True)),
              np.zeros((1, 2)))


def test_table_rejects_out_of_range_levels_and_non_finite():
    cols = (Column.categorical("b", 2), Column.categorical("y", 2, True))
    with pytest.raises(SchemaError):
        Table(cols, [[2.0, 0.0]])
    with pytest.raises(SchemaError):
        Table(cols, [[0.5, 0.0]])
    with pytest.raises(SchemaError):
        Table((Column.continuous("a"), Column.categorical("y", 2, True)), [[np.nan, 0.0]])


def test_target_needs_two_levels():
    with pytest.raises(SchemaError):
        Table((Column.continuous("a"), Column.categorical("y", 1, True)), np.zeros((1, 2)))


def test_table_is_immutable():
    t = small_table()
    with pytest.raises(ValueError):
        t.data[0, 0] = 1.0


# -- generator --------------------------------------------------------------

def test_artificial_1_shape():
    t = artificial("artificial-1", seed=0)
    assert t.n_rows == 10000
    assert len(t.feature_columns) == 5 and all(c.is_categorical for c in t.feature_columns)
    assert t.target.n_levels == 2 and set(np.unique(t.labels())) == {0, 1}
    assert all(c.n_levels == 5 for c in t.feature_columns)


def test_artificial_2_redundant_columns_are_linear_in_column_0():
    t = artificial("artificial-2", seed=3, categorical=False)
    x0 = t.values("x0")
    for name in ("x1", "x2", "x3", "x4"):
        # one informative feature, so every redundant column is a multiple of it
        assert abs(pearson(x0, t.values(name))) > 0.999999


def test_artificial_4_is_continuous():
    t = artificial("artificial-4", seed=0)
    assert len(t.feature_columns) == 15
    assert not any(c.is_categorical for c in t.feature_columns)


def test_artificial_5_has_three_features():
    t = artificial("artificial-5", seed=0)
    assert t.feature_names == ["x0", "x1", "x2"]


def test_redundant_columns_correlate_with_their_combination():
    spec = ArtificialSpec(n_rows=4000, n_informative=3, n_redundant=3, categorical=False)
    t = generate_artificial(spec, seed=11)
    inf = t.features()[:, :3]
    for j in range(3, 6):
        red = t.features()[:, j]
        coef, *_ = np.linalg.lstsq(inf, red, rcond=None)
        assert abs(pearson(inf @ coef, red)) > 0.99


def test_generator_determinism_and_seed_sensitivity():
    spec = replace_rows(ARTIFICIAL["artificial-1"], 500)
    assert generate_artificial(spec, 4) == generate_artificial(spec, 4)
    assert generate_artificial(spec, 4) != generate_artificial(spec, 5)


def replace_rows(spec, n):
    from dataclasses import replace
    return replace(spec, n_rows=n)


def test_generator_balanced_classes():
    t = artificial("artificial-1", seed=1, n_rows=1001)
    counts = np.bincount(t.labels())
    assert abs(counts[0] - counts[1]) <= 1


@pytest.mark.parametrize("bad", [
    dict(n_informative=0, n_redundant=0, n_noise=0),
    dict(n_informative=0, n_redundant=2),
    dict(n_levels=1),
    dict(class_sep=0.0),
    dict(n_classes=1),
    dict(importance_profile="steep"),
])
def test_invalid_spec_names_the_violation(bad):
    with pytest.raises(ConfigError, match="invalid ArtificialSpec"):
        generate_artificial(ArtificialSpec(**{**dict(n_rows=10), **bad}), 0)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        artificial("artificial-9", 0)


def test_multiclass_generation():
    t = artificial("artificial-1", seed=0, n_rows=900, n_classes=3)
    assert t.target.n_levels == 3 and set(np.unique(t.labels())) == {0, 1, 2}


# -- CSV --------------------------------------------------------------------

SCHEMA = [Column.continuous("age"), Column.categorical("sex", 2),
          Column.categorical("label", 2, is_target=True)]


def test_load_csv_three_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("age,sex,label\n31.5,F,yes\n40,M,no\n22,F,no\n")
    t = load_csv(p, SCHEMA)
    assert t.n_rows == 3
    assert t.values("sex").tolist() == [0, 1, 0]
    assert t.column("label").labels == ("yes", "no")
    assert t.values("age").tolist() == [31.5, 40.0, 22.0]


def test_load_csv_reports_cell_location(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("age,sex,label\n31.5,F,yes\nabc,M,no\n")
    with pytest.raises(IngestionError, match=r"d.csv:3 column 'age'.*'abc'"):
        load_csv(p, SCHEMA)


@pytest.mark.parametrize("cell", ["", "NaN", "nan", "inf"])
def test_load_csv_rejects_missing_and_non_finite(tmp_path, cell):
    p = tmp_path / "d.csv"
    p.write_text(f"age,sex,label\n{cell},F,yes\n")
    with pytest.raises(IngestionError, match=":2 column 'age'"):
        load_csv(p, SCHEMA)


def test_load_csv_header_only(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("age,sex,label\n")
    t = load_csv(p, SCHEMA)
    assert t.n_rows == 0 and t.data.shape == (0, 3)


def test_load_csv_errors(tmp_path):
    with pytest.raises(IngestionError, match="no such file"):
        load_csv(tmp_path / "missing.csv", SCHEMA)
    p = tmp_path / "d.csv"
    p.write_text("age,gender,label\n1,F,yes\n")
    with pytest.raises(IngestionError, match="header"):
        load_csv(p, SCHEMA)
    p.write_text("age,sex,label\n1,F,yes\n2,M,no\n3,X,no\n")
    with pytest.raises(IngestionError, match="level count"):
        load_csv(p, SCHEMA)


def test_load_csv_infers_level_count(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("age,sex,label\n1,a,y\n2,b,n\n3,c,n\n")
    t = load_csv(p, [Column.continuous("age"), Column.categorical("sex"),
                     Column.categorical("label", is_target=True)])
    assert t.column("sex").n_levels == 3 and t.target.n_levels == 2


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cols = (Column.continuous("a"), Column.categorical("b", 4),
            Column.categorical("y", 2, is_target=True))
    t = Table(cols, np.column_stack([rng.normal(size=50) * 1e3, rng.integers(0, 4, 50),
                                     rng.integers(0, 2, 50)]))
    write_csv(t, tmp_path / "t.csv")
    write_schema(cols, tmp_path / "t.toml")
    back = load_csv(tmp_path / "t.csv", load_schema(tmp_path / "t.toml"))
    np.testing.assert_allclose(back.values("a"), t.values("a"), rtol=1e-12)
    # levels are re-coded by first appearance; the label strings carry the old codes
    labels = back.column("b").labels
    assert [int(labels[int(v)]) for v in back.values("b")] == t.values("b").astype(int).tolist()
    write_csv(back, tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_text() == (tmp_path / "t.csv").read_text()


def test_schema_unknown_keys(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('[[columns]]\nname = "a"\nkind = "continuous"\nunit = "kg"\n')
    with pytest.raises(ConfigError, match="valid keys"):
        load_schema(p)


# -- split ------------------------------------------------------------------

def test_split_sizes_and_determinism():
    t = artificial("artificial-1", seed=0)
    a, b = split(t, 0.7, 9), split(t, 0.7, 9)
    assert (a.train.n_rows, a.validation.n_rows) == (7000, 3000)
    assert a.train == b.train and a.validation == b.validation


def test_split_row_frequency_over_seeds():
    t = Table((Column.continuous("id"), Column.categorical("y", 2, True)),
              np.column_stack([np.arange(10.0), np.arange(10) % 2]))
    hits = np.zeros(10)
    for seed in range(1000):
        hits[split(t, 0.7, seed).train.values("id").astype(int)] += 1
    assert np.all(np.abs(hits / 1000 - 0.7) <= 0.10)


def test_split_errors():
    with pytest.raises(SizeError):
        split(small_table(1), 0.7, 0)
    with pytest.raises(ConfigError):
        split(small_table(), 1.0, 0)


@given(n=st.integers(2, 60), frac=st.floats(0.05, 0.95), seed=st.integers(0, 2**32 - 1))
def test_split_is_a_partition(n, frac, seed):
    t = small_table(n)
    sp = split(t, frac, seed)
    tr, va = sp.train.values("a"), sp.validation.values("a")
    assert len(tr) + len(va) == n
    assert not set(tr) & set(va)
    assert sorted(np.concatenate([tr, va])) == sorted(t.values("a"))
    assert sp.train.columns == t.columns == sp.validation.columns


# -- binning ----------------------------------------------------------------

def test_discretize_constant_column():
    t = Table((Column.continuous("a"), Column.categorical("y", 2, True)),
              np.column_stack([np.full(20, 3.0), np.arange(20) % 2]))
    d = discretize(t, "a", 10)
    assert d.column("a").n_levels == 1 and np.all(d.values("a") == 0)


def test_discretize_quartiles():
    t = Table((Column.continuous("a"), Column.categorical("y", 2, True)),
              np.column_stack([np.arange(1.0, 101.0), np.arange(100) % 2]))
    d = discretize(t, "a", 4)
    assert np.bincount(d.values("a").astype(int)).tolist() == [25, 25, 25, 25]
    assert d.values("y").tolist() == t.values("y").tolist()


def test_quantile_bins_normal_sample():
    x = np.random.default_rng(0).standard_normal(10000)
    codes, edges = quantile_bins(x, 10)
    counts = np.bincount(codes)
    assert len(counts) == 10 and np.all(np.abs(counts - 1000) <= 1)
    assert np.array_equal(apply_bins(x, edges), codes)


def test_discretize_errors():
    t = small_table()
    with pytest.raises(SchemaError):
        discretize(t, "b", 3)
    with pytest.raises(SchemaError):
        discretize(t, "zzz", 3)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.integers(1, 12))
def test_quantile_bins_properties(values, n_bins):
    x = np.array(values)
    codes, edges = quantile_bins(x, n_bins)
    k = len(edges) - 1
    assert 1 <= k <= n_bins
    assert set(np.unique(codes)) == set(range(k))  # no empty bins
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(codes[order]) >= 0)  # monotone in the value
    assert np.all(x <= edges[codes + 1]) and np.all((x > edges[codes]) | (codes == 0))
