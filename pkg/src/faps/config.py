"""JSON run configuration.

Top-level blocks: ``space``, ``search``, ``trainer``, ``template``, ``io``.
Every block is optional and falls back to defaults; unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import importlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from .affine import BaseTemplate
from .geometry import SearchSpace
from .search import SearchConfig
from .trainers import SyntheticTrainer, SyntheticTrainerConfig, Trainer


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IOConfig:
    out_dir: str = "runs/latest"
    events: str = "events.jsonl"
    result: str = "result.json"
    grid: str = "grid.csv"
    trajectory: str = "trajectory.csv"


@dataclass(frozen=True)
class TrainerConfig:
    type: str = "synthetic"
    synthetic: SyntheticTrainerConfig = field(default_factory=SyntheticTrainerConfig)
    # "package.module:callable" returning a Trainer; only for type="external"
    factory: Optional[str] = None
    options: Dict[str, Any] = field(default_factory=dict)

    def build(self) -> Trainer:
        if self.type == "synthetic":
            return SyntheticTrainer(self.synthetic)
        module_name, _, attr = (self.factory or "").partition(":")
        if not module_name or not attr:
            raise ConfigError("external trainer needs factory = 'module:callable'")
        try:
            factory = getattr(importlib.import_module(module_name), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot load trainer factory {self.factory!r}: {exc}") from exc
        trainer = factory(**self.options)
        if not isinstance(trainer, Trainer):
            raise ConfigError(f"{self.factory!r} did not return a Trainer")
        return trainer


@dataclass(frozen=True)
class RunConfig:
    space: SearchSpace = field(default_factory=SearchSpace)
    search: SearchConfig = field(default_factory=SearchConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    template: BaseTemplate = field(default_factory=BaseTemplate)
    io: IOConfig = field(default_factory=IOConfig)

    def with_overrides(self, seed: Optional[int] = None, mode: Optional[str] = None, out_dir: Optional[str] = None):
        cfg = self
        if seed is not None or mode is not None:
            changes = {k: v for k, v in (("seed", seed), ("mode", mode)) if v is not None}
            try:
                cfg = dataclasses.replace(cfg, search=dataclasses.replace(cfg.search, **changes))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if out_dir is not None:
            cfg = dataclasses.replace(cfg, io=dataclasses.replace(cfg.io, out_dir=out_dir))
        return cfg


def _build(cls, data: Any, where: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - {f.name for f in dataclasses.fields(RunConfig)})
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")

    blocks: Dict[str, Any] = {}
    if "space" in data:
        blocks["space"] = _build(SearchSpace, data["space"], "space")
    if "search" in data:
        blocks["search"] = _build(SearchConfig, data["search"], "search")
    if "template" in data:
        tpl = dict(data["template"]) if isinstance(data["template"], Mapping) else data["template"]
        if isinstance(tpl, dict) and "landmarks" in tpl:
            tpl["landmarks"] = tuple(tuple(pt) for pt in tpl["landmarks"])
        blocks["template"] = _build(BaseTemplate, tpl, "template")
    if "trainer" in data:
        tr = data["trainer"]
        if not isinstance(tr, Mapping):
            raise ConfigError("trainer: expected an object")
        tr = dict(tr)
        kind = tr.get("type", "synthetic")
        if kind not in ("synthetic", "external"):
            raise ConfigError(f"trainer: unknown type {kind!r}")
        if "synthetic" in tr:
            syn = dict(tr["synthetic"]) if isinstance(tr["synthetic"], Mapping) else tr["synthetic"]
            if isinstance(syn, dict) and "optimum" in syn:
                syn["optimum"] = tuple(syn["optimum"])
            tr["synthetic"] = _build(SyntheticTrainerConfig, syn, "trainer.synthetic")
        blocks["trainer"] = _build(TrainerConfig, tr, "trainer")
    if "io" in data:
        blocks["io"] = _build(IOConfig, data["io"], "io")
    cfg = RunConfig(**blocks)
    if cfg.template.canvas != cfg.space.canvas:
        raise ConfigError(f"template canvas {cfg.template.canvas} != space canvas {cfg.space.canvas}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data)
