import pytest

from fisim.bench import DEFAULT_EPSILONS
from fisim.config import bundled_configs, load_config, parse_config, resolve_config_path
from fisim.errors import ConfigError, RecipeError


def test_bundled_configs_parse():
    names = bundled_configs()
    assert {f"artificial-{i}" for i in range(1, 6)} <= set(names) and "smoke" in names
    for name in names:
        cfg = load_config(name)
        assert cfg.synthesizers
    full = load_config("artificial-1")
    assert full.repeats_outer == 25 and full.epsilon_grid == DEFAULT_EPSILONS
    assert full.forest.n_trees == 150 and full.rbo_params.p == 0.8
    assert full.importance.measure == "shap"
    assert load_config("artificial-5").dataset.artificial.n_informative == 3


def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError, match=r"unknown keys \['n_tree'\]; valid keys: .*'n_trees'"):
        parse_config({"dataset": {"artificial": "artificial-1"}, "synthesizer": [{"kind": "privbayes"}],
                      "forest": {"n_tree": 3}})
    with pytest.raises(ConfigError, match="valid keys"):
        parse_config({"dataset": {"artificial": "artificial-1"}, "extra": {}})
    with pytest.raises(ConfigError, match="valid keys"):
        parse_config({"dataset": {"artificial": "artificial-1"},
                      "synthesizer": [{"kind": "privbayes", "epsilon": 1}]})


def test_other_config_errors():
    with pytest.raises(ConfigError, match="dataset"):
        parse_config({"synthesizer": [{"kind": "privbayes"}]})
    with pytest.raises(ConfigError, match="known"):
        parse_config({"dataset": {"artificial": "artificial-7"}, "synthesizer": [{"kind": "privbayes"}]})
    with pytest.raises(ConfigError):
        parse_config({"dataset": {"csv": "x.csv", "n_rows": 5}, "synthesizer": [{"kind": "privbayes"}]})
    with pytest.raises(ConfigError):
        load_config("no-such-config")
    with pytest.raises(RecipeError):
        parse_config({"dataset": {"artificial": "artificial-1"}, "synthesizer": [{"kind": "privbayes"}],
                      "recipe": {"transforms": ["power"]}})


def test_relative_paths_resolve_against_config_dir(tmp_path):
    d = tmp_path / "exp"
    d.mkdir()
    (d / "data.csv").write_text("a,y\n1.0,p\n2.0,q\n")
    (d / "schema.toml").write_text('[[columns]]\nname = "a"\nkind = "continuous"\n'
                                   '[[columns]]\nname = "y"\nkind = "categorical"\ntarget = true\n')
    (d / "exp.toml").write_text('[experiment]\nrepeats_outer = 3\nepsilon_grid = [1.0]\n'
                                '[dataset]\ncsv = "data.csv"\nschema = "schema.toml"\n'
                                '[[synthesizer]]\nkind = "subsample"\nfraction = 0.5\n'
                                '[recipe]\ntransforms = ["percentile"]\n')
    cfg = load_config(d / "exp.toml")
    assert cfg.dataset.csv == d / "data.csv" and cfg.dataset.tag == "data"
    assert cfg.dataset.load(0).n_rows == 2
    assert cfg.recipe.transform_primitives == ("percentile",)
    assert resolve_config_path(d / "exp.toml") == d / "exp.toml"


def test_generator_overrides():
    cfg = parse_config({"dataset": {"artificial": "artificial-1", "n_rows": 123, "tag": "small"},
                        "synthesizer": [{"kind": "resample_columns"}]})
    assert cfg.dataset.artificial.n_rows == 123 and cfg.dataset.tag == "small"
