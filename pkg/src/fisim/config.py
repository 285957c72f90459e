"""Experiment config files (TOML).

Example::

    [experiment]
    master_seed = 0
    repeats_outer = 25
    epsilon_grid = [0.0001, 0.001, 0.01, 0.1, 0.4, 1.0, 4.0, 10.0]

    [dataset]
    artificial = "artificial-1"   # or: csv = "data.csv", schema = "schema.toml"

    [[synthesizer]]
    kind = "privbayes"

    [forest]
    n_trees = 150

Unknown sections or keys are rejected with the list of valid ones. Relative
paths are resolved against the config file's directory. A bare name such as
``artificial-1`` refers to a config bundled with the package.
"""
from __future__ import annotations

from dataclasses import fields, replace
from importlib import resources
from pathlib import Path

from ._toml import load_toml
from .bench import DatasetSpec, ExperimentConfig, ImportanceSettings, SynthesizerSpec
from .errors import ConfigError
from .featgen import FeatureRecipe
from .forest import ForestConfig
from .ranksim import RboParams
from .tabular import ARTIFICIAL, ArtificialSpec

SECTIONS = ("experiment", "dataset", "synthesizer", "forest", "importance", "similarity", "recipe")
EXPERIMENT_KEYS = ("master_seed", "repeats_outer", "repeats_inner", "train_frac", "epsilon_grid")
DATASET_KEYS = ("tag", "artificial", "csv", "schema", "seed",
                *(f.name for f in fields(ArtificialSpec)))
SYNTH_KEYS = tuple(f.name for f in fields(SynthesizerSpec))
FOREST_KEYS = tuple(f.name for f in fields(ForestConfig))
IMPORTANCE_KEYS = tuple(f.name for f in fields(ImportanceSettings))
SIMILARITY_KEYS = ("p", "k", "normalize")
RECIPE_KEYS = ("transforms", "group_key", "aggregations")


def _check_keys(table: dict, valid, where: str) -> None:
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table")
    unknown = set(table) - set(valid)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}; valid keys: {sorted(valid)}")


def bundled_configs() -> list[str]:
    root = resources.files("fisim") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_config_path(name_or_path) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = resources.files("fisim") / "configs" / f"{name_or_path}.toml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config {str(name_or_path)!r} is neither a file nor a bundled config "
                      f"{bundled_configs()}")


def _dataset(doc: dict, base: Path) -> DatasetSpec:
    _check_keys(doc, DATASET_KEYS, "[dataset]")
    overrides = {k: v for k, v in doc.items() if k in {f.name for f in fields(ArtificialSpec)}}
    name = doc.get("artificial")
    if name is not None:
        if name not in ARTIFICIAL:
            raise ConfigError(f"[dataset]: unknown artificial preset {name!r}; "
                              f"known: {sorted(ARTIFICIAL)}")
        spec = replace(ARTIFICIAL[name], **overrides)
        return DatasetSpec(doc.get("tag", name), artificial=spec, seed=doc.get("seed"))
    if overrides:
        raise ConfigError(f"[dataset]: generator keys {sorted(overrides)} need 'artificial'")
    if "csv" not in doc:
        raise ConfigError("[dataset]: set either 'artificial' or 'csv' + 'schema'")
    csv_path = base / doc["csv"]
    schema = base / doc["schema"] if "schema" in doc else None
    return DatasetSpec(doc.get("tag", csv_path.stem), csv=csv_path, schema=schema)


def _recipe(doc: dict | None) -> FeatureRecipe | None:
    if not doc:
        return None
    _check_keys(doc, RECIPE_KEYS, "[recipe]")
    return FeatureRecipe(tuple(doc.get("transforms", ())), doc.get("group_key"),
                         tuple(doc.get("aggregations", ())))


def parse_config(doc: dict, base: Path = Path(".")) -> ExperimentConfig:
    _check_keys(doc, SECTIONS, "config")
    exp = doc.get("experiment", {})
    _check_keys(exp, EXPERIMENT_KEYS, "[experiment]")
    if "dataset" not in doc:
        raise ConfigError("config: missing [dataset] section")
    synths = doc.get("synthesizer", [])
    if isinstance(synths, dict):
        synths = [synths]
    for i, s in enumerate(synths):
        _check_keys(s, SYNTH_KEYS, f"[[synthesizer]] #{i + 1}")
    for section, keys in (("forest", FOREST_KEYS), ("importance", IMPORTANCE_KEYS),
                          ("similarity", SIMILARITY_KEYS)):
        _check_keys(doc.get(section, {}), keys, f"[{section}]")
    try:
        return ExperimentConfig(
            dataset=_dataset(doc["dataset"], base),
            synthesizers=tuple(SynthesizerSpec(**s) for s in synths),
            forest=ForestConfig(**doc.get("forest", {})),
            rbo_params=RboParams(**doc.get("similarity", {})),
            importance=ImportanceSettings(**doc.get("importance", {})),
            recipe=_recipe(doc.get("recipe")),
            **exp,
        )
    except TypeError as exc:  # wrong value types surface here
        raise ConfigError(f"config: {exc}") from None


def load_config(name_or_path) -> ExperimentConfig:
    path = resolve_config_path(name_or_path)
    return parse_config(load_toml(path), path.parent)
