"""Flat dotted-key experiment config (YAML file plus ``--key value`` overrides)."""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Iterable, Mapping

import yaml

from .composer import ModelSpec, parse_backbones
from .data import ConfigurationError
from .train import TrainConfig

DEFAULTS = {
    "data.format": "frappe",
    "data.path": None,
    "data.cache": None,
    "data.min_count": 10,
    "data.seed": 2022,
    "data.ratios": [0.8, 0.1, 0.1],
    "data.label_column": "label",
    "data.delimiter": None,
    "data.numeric_columns": [],
    "data.name": None,
    "model.pattern": "stacked",
    "model.backbones": "FM",
    "model.fr": "SKIP",
    "model.fr_b": None,
    "model.dim": 16,
    "model.fusion": "sum",
    **{f"train.{f.name}": f.default for f in fields(TrainConfig)},
    "train.runs": 10,
    "train.grid_search": False,
    "train.lr_grid": [0.1, 0.01, 0.001],
    "train.batch_grid": [2000, 5000, 10000],
    "bench.base_models": ["FM"],
    "bench.modules": ["SKIP"],
    "bench.separate": False,
    "output.dir": "runs",
}

#: sections whose sub-keys are free-form (``fr.GFRL.m``, ``backbone.DNN.widths``)
OPEN_SECTIONS = ("fr.", "backbone.")


def flatten(tree: Mapping, prefix: str = "") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def section(cfg: Mapping, prefix: str) -> dict:
    """Nested dict of every key under ``prefix.`` (prefix stripped)."""
    out: dict = {}
    for key, v in cfg.items():
        if not key.startswith(prefix + "."):
            continue
        node = out
        *parents, leaf = key[len(prefix) + 1:].split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = v
    return out


def _check_key(key: str):
    if key not in DEFAULTS and not key.startswith(OPEN_SECTIONS):
        raise ConfigurationError(f"unknown config key {key!r}")


def parse_overrides(args: Iterable[str]) -> dict:
    """``["--train.lr", "0.1", "--model.fr=GFRL"]`` -> ``{"train.lr": 0.1, "model.fr": "GFRL"}``."""
    args = list(args)
    out, i = {}, 0
    while i < len(args):
        tok = args[i]
        if not tok.startswith("--"):
            raise ConfigurationError(f"expected --key value, got {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigurationError(f"missing value for {tok}")
            raw = args[i + 1]
            i += 2
        key = key.replace("-", "_") if key.split(".")[0] in ("data", "train", "model", "bench", "output") else key
        out[key] = yaml.safe_load(raw)
    return out


def load_config(path: str | Path | None = None, overrides: Mapping | None = None) -> dict:
    cfg = dict(DEFAULTS)
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(loaded, Mapping):
            raise ConfigurationError(f"{path}: top level must be a mapping")
        cfg.update(flatten(loaded))
    cfg.update(overrides or {})
    for key in cfg:
        _check_key(key)
    return cfg


def train_config(cfg: Mapping) -> TrainConfig:
    return TrainConfig(**{f.name: cfg[f"train.{f.name}"] for f in fields(TrainConfig)})


def model_spec(cfg: Mapping, backbones=None, fr=None, pattern: str | None = None) -> ModelSpec:
    backbones = backbones if backbones is not None else cfg["model.backbones"]
    pattern = pattern or cfg["model.pattern"]
    if fr is None:
        fr = [cfg["model.fr"]] if cfg["model.fr"] else []
        if cfg["model.fr_b"]:
            fr.append(cfg["model.fr_b"])
        elif pattern == "parallel_separate" and fr:
            fr = fr * 2
    return ModelSpec(pattern=pattern, backbones=backbones, fr=tuple(fr), dim=cfg["model.dim"],
                     fr_cfg=section(cfg, "fr"), backbone_cfg=section(cfg, "backbone"),
                     fusion=cfg["model.fusion"])


def spec_for(cfg: Mapping, base: str, fr: str | None) -> ModelSpec:
    """Spec for one results-table cell: ``base`` like ``"FM"``, ``"DeepFM"`` or ``"DeepFM(2)"``."""
    separate = base.endswith("(2)")
    backbones = parse_backbones(base.removesuffix("(2)"))
    if separate:
        pattern, frs = "parallel_separate", (fr, fr)
    else:
        pattern = "stacked" if len(backbones) == 1 else "parallel_shared"
        frs = (fr,) if fr else ()
    return model_spec(cfg, backbones=backbones, fr=frs, pattern=pattern)
