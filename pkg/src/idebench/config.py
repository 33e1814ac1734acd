"""Run configuration: defaults, JSON overlay, strict key checking, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .baseline import BaselineConfig
from .ide import DEFAULT_BASE_ENTROPY, DEFAULT_TAU, IDEConfig
from .vision.saliency import DEFAULT_BASE, DEFAULT_THRESHOLD
from .vision.vae import VAEConfig

RUN_ROOT_ENV = "IDEBENCH_RUN_ROOT"
PAPER_ANGLES = [0.0, 10.0, 30.0, 45.0, 60.0, 80.0, 90.0]


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    toy_per_combo: int = 500
    toy_noise: float = 0.05
    babyai_n: int = 9000
    ai2thor_n: int = 9000
    scenes_per_description: int = 50
    scene_size: int = 64
    scene_noise: float = 0.01


@dataclass
class InferenceConfig:
    base_entropy: float = DEFAULT_BASE_ENTROPY
    tau: float = DEFAULT_TAU


@dataclass
class VisionConfig:
    saliency_base: float = DEFAULT_BASE
    saliency_threshold: float = DEFAULT_THRESHOLD


@dataclass
class EvalConfig:
    n_tasks: int = 3000
    angles: list = field(default_factory=lambda: list(PAPER_ANGLES))
    planes: list = field(default_factory=lambda: [[3, 4]])


@dataclass
class PathConfig:
    run_root: str | None = None


@dataclass
class RunConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    ide: IDEConfig = field(default_factory=IDEConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    vae: VAEConfig = field(default_factory=VAEConfig)
    vision: VisionConfig = field(default_factory=VisionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathConfig = field(default_factory=PathConfig)

    def resolved(self) -> "RunConfig":
        """Copy with the master seed pushed into every trainable section."""
        cfg = from_dict(to_dict(self))
        cfg.ide.seed = cfg.baseline.seed = cfg.vae.seed = cfg.seed
        return cfg

    @property
    def run_root(self) -> Path:
        return Path(self.paths.run_root or os.environ.get(RUN_ROOT_ENV) or "runs")


def to_dict(cfg) -> dict:
    doc = asdict(cfg)
    doc["vae"]["channels"] = list(doc["vae"]["channels"])
    return doc


def _build(cls, doc: dict, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys at {where or 'top level'}: {unknown}")
    kwargs = {}
    for name, value in doc.items():
        f = known[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc, "")


def merge(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for k, v in overlay.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, overlaid by the JSON file, overlaid by CLI overrides."""
    doc = to_dict(RunConfig())
    if path is not None:
        try:
            file_doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
        # validate the file on its own so typos are reported against the file
        _build(RunConfig, merge(to_dict(RunConfig()), file_doc), "")
        doc = merge(doc, file_doc)
    if overrides:
        doc = merge(doc, overrides)
    return from_dict(doc).resolved()


def digest(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]
