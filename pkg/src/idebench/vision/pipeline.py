"""Raw-image object selection: saliency + VAE features feeding IDE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import datagen as dg
from ..evalkit import EvalReport, build_tasks, evaluate
from ..gradcore import make_rng
from ..ide import DEFAULT_BASE_ENTROPY, DEFAULT_TAU, DensityModel, IDEConfig, compose, train_ide
from .saliency import DEFAULT_BASE, DEFAULT_THRESHOLD
from .vae import (VAEConfig, VaeModel, batch_pipeline_features, extract_patch, pipeline_features,
                  reconstruction_mse, train_vae)


class PipelineSelector:
    """Selector over SceneImage candidates; features are cached per image object."""

    def __init__(self, vae: VaeModel, model: DensityModel, base: float = DEFAULT_BASE,
                 threshold: float = DEFAULT_THRESHOLD, E: float = DEFAULT_BASE_ENTROPY,
                 tau: float = DEFAULT_TAU):
        self.vae, self.model = vae, model
        self.base, self.threshold, self.E, self.tau = base, threshold, E, tau
        self._cache: dict[int, np.ndarray] = {}

    def prime(self, images: Sequence) -> None:
        feats = batch_pipeline_features(self.vae, images, self.base, self.threshold)
        for im, f in zip(images, feats):
            self._cache[id(im)] = f

    def features(self, image) -> np.ndarray:
        f = self._cache.get(id(image))
        if f is None:
            f = self._cache[id(image)] = pipeline_features(self.vae, image, self.base,
                                                           self.threshold)
        return f

    def __call__(self, tokens, candidates) -> int:
        f_hat = compose(self.model, tokens, self.E, self.tau)
        dists = [np.linalg.norm(self.features(c) - f_hat) for c in candidates]
        return int(np.argmin(dists))


@dataclass
class RawResult:
    seed: int
    train_accuracy: float
    holdout_accuracy: float
    recon_mse: float
    train_report: EvalReport
    holdout_report: EvalReport
    vae: VaeModel
    model: DensityModel


def scene_examples(vae: VaeModel, scenes: Sequence[dg.SceneImage], base: float = DEFAULT_BASE,
                   threshold: float = DEFAULT_THRESHOLD) -> list[dg.Example]:
    feats = batch_pipeline_features(vae, scenes, base, threshold)
    return [dg.Example(f, s.tokens) for f, s in zip(feats, scenes)]


def run_raw_pipeline(split: dg.Split, seed: int = 0, vae_config: VAEConfig | None = None,
                     ide_config: IDEConfig | None = None, n_tasks: int = 3000,
                     base: float = DEFAULT_BASE, threshold: float = DEFAULT_THRESHOLD,
                     E: float = DEFAULT_BASE_ENTROPY, tau: float = DEFAULT_TAU) -> RawResult:
    """Train the VAE on training-scene patches, then IDE on their latents; evaluate both columns."""
    vae_config = vae_config or VAEConfig(seed=seed)
    ide_config = ide_config or IDEConfig(seed=seed)
    patches = np.stack([extract_patch(s, base, threshold, vae_config.patch_size)
                        for s in split.train])
    vae = train_vae(patches, vae_config)
    model = train_ide(scene_examples(vae, split.train, base, threshold), ide_config)
    selector = PipelineSelector(vae, model, base, threshold, E, tau)
    selector.prime(list(split.train) + list(split.holdout))
    train_tasks = build_tasks(split.train, n_tasks, make_rng(seed, "raw-train-tasks"), raw=True)
    hold_tasks = build_tasks(split.holdout, n_tasks, make_rng(seed, "raw-holdout-tasks"), raw=True)
    rep_train = evaluate(selector, train_tasks)
    rep_hold = evaluate(selector, hold_tasks)
    return RawResult(seed, rep_train.accuracy, rep_hold.accuracy, reconstruction_mse(vae, patches),
                     rep_train, rep_hold, vae, model)
