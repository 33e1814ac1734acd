"""Convolutional VAE over object patches, and the raw-image feature pipeline."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..gradcore import (ParamSet, Tensor, adam_step, add_dense, check_finite_loss, conv2d,
                        conv_transpose2d, dense, leaky_relu, load_checkpoint, make_rng, no_grad,
                        save_checkpoint)
from ..gradcore.rng import Rng
from .saliency import DEFAULT_BASE, DEFAULT_THRESHOLD, clip_patch, locate, saliency


@dataclass
class VAEConfig:
    epochs: int = 300
    batch: int = 200
    lr: float = 0.001
    seed: int = 0
    latent_dim: int = 4
    patch_size: int = 32
    channels: tuple = (16, 32)
    slope: float = 0.1

    def __post_init__(self):
        self.channels = tuple(self.channels)
        if self.patch_size % 4:
            raise ValueError("patch size must be divisible by 4")


class VaeModel:
    """conv(3->16) -> conv(16->32) -> dense -> (mu, logvar); decoder mirrors it."""

    def __init__(self, config: VAEConfig | None = None):
        self.config = cfg = config or VAEConfig()
        c1, c2 = cfg.channels
        self.bottom = cfg.patch_size // 4
        flat = c2 * self.bottom * self.bottom
        rng = make_rng(cfg.seed, "vae-init")
        p = self.params = ParamSet()
        p.add_uniform("enc.conv1.W", (c1, 3, 4, 4), rng)
        p.add_uniform("enc.conv1.b", (c1,), rng)
        p.add_uniform("enc.conv2.W", (c2, c1, 4, 4), rng)
        p.add_uniform("enc.conv2.b", (c2,), rng)
        add_dense(p, "enc.fc", flat, 2 * cfg.latent_dim, rng)
        add_dense(p, "dec.fc", cfg.latent_dim, flat, rng)
        p.add_uniform("dec.deconv1.W", (c2, c1, 4, 4), rng)
        p.add_uniform("dec.deconv1.b", (c1,), rng)
        p.add_uniform("dec.deconv2.W", (c1, 3, 4, 4), rng)
        p.add_uniform("dec.deconv2.b", (3,), rng)
        self.loss_history: list[float] = []

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def encoder(self, x: np.ndarray) -> tuple[Tensor, Tensor]:
        """``x [N, H, W, 3]`` -> (mu, logvar), each ``[N, latent]``."""
        p, s = self.params, self.config.slope
        t = Tensor(np.ascontiguousarray(np.asarray(x, dtype=np.float64).transpose(0, 3, 1, 2)))
        h = leaky_relu(conv2d(t, p["enc.conv1.W"], p["enc.conv1.b"]), s)
        h = leaky_relu(conv2d(h, p["enc.conv2.W"], p["enc.conv2.b"]), s)
        out = dense(p, "enc.fc", h.reshape(h.shape[0], -1))
        k = self.latent_dim
        return out[:, :k], out[:, k:]

    def decoder(self, z: Tensor) -> Tensor:
        """``z [N, latent]`` -> patches ``[N, H, W, 3]`` in (0, 1)."""
        p, s = self.params, self.config.slope
        c2 = self.config.channels[1]
        h = leaky_relu(dense(p, "dec.fc", z), s).reshape(z.shape[0], c2, self.bottom, self.bottom)
        h = leaky_relu(conv_transpose2d(h, p["dec.deconv1.W"], p["dec.deconv1.b"]), s)
        h = conv_transpose2d(h, p["dec.deconv2.W"], p["dec.deconv2.b"]).sigmoid()
        return h.transpose(0, 2, 3, 1)

    def save(self, path) -> None:
        cfg = asdict(self.config)
        cfg["channels"] = list(cfg["channels"])
        save_checkpoint(self.params, path, {"kind": "vae", "config": cfg,
                                            "loss_history": self.loss_history})

    @classmethod
    def load(cls, path) -> "VaeModel":
        values, meta = load_checkpoint(path)
        model = cls(VAEConfig(**meta["config"]))
        model.params.load_values(values)
        model.loss_history = list(meta.get("loss_history", []))
        return model


def _check_patches(model: VaeModel, patches: np.ndarray) -> np.ndarray:
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    ps = model.config.patch_size
    if x.shape[1:] != (ps, ps, 3):
        raise ValueError(f"expected patches of shape ({ps}, {ps}, 3), got {x.shape[1:]}")
    return x


def vae_encode(model: VaeModel, patch) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance; batched input gives batched output."""
    x = _check_patches(model, patch)
    with no_grad():
        mu, logvar = model.encoder(x)
    mu, var = mu.data.copy(), np.exp(logvar.data)
    if np.ndim(patch) == 3:
        return mu[0], var[0]
    return mu, var


def vae_decode(model: VaeModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    with no_grad():
        out = model.decoder(Tensor(np.atleast_2d(z))).data.copy()
    return out[0] if single else out


def kl_term(mu, logvar) -> float:
    mu, logvar = np.asarray(mu, dtype=np.float64), np.asarray(logvar, dtype=np.float64)
    return float(0.5 * np.sum(mu * mu + np.exp(logvar) - 1.0 - logvar))


def elbo_terms(model: VaeModel, patches, eps: np.ndarray) -> tuple[Tensor, Tensor]:
    """Batch-mean (reconstruction SSE, KL) with fixed reparameterisation noise ``eps``."""
    x = _check_patches(model, patches)
    mu, logvar = model.encoder(x)
    z = mu + (logvar * 0.5).exp() * Tensor(eps)
    recon = model.decoder(z)
    diff = recon - Tensor(x)
    n = x.shape[0]
    sse = (diff * diff).sum() * (1.0 / n)
    kl = (mu * mu + logvar.exp() - 1.0 - logvar).sum() * (0.5 / n)
    return sse, kl


def elbo_loss(model: VaeModel, patches, rng: Rng) -> Tensor:
    """Negative ELBO (beta = 1): summed squared error plus KL to N(0, I), batch mean."""
    x = _check_patches(model, patches)
    eps = rng.standard_normal((x.shape[0], model.latent_dim))
    sse, kl = elbo_terms(model, x, eps)
    return sse + kl


def train_vae(patches, config: VAEConfig | None = None) -> VaeModel:
    config = config or VAEConfig()
    model = VaeModel(config)
    x = _check_patches(model, patches)
    if len(x) == 0:
        raise ValueError("no training patches")
    rng = make_rng(config.seed, "vae-train")
    params = model.params
    n = len(x)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch):
            idx = order[lo:lo + config.batch]
            params.zero_grad()
            loss = elbo_loss(model, x[idx], rng)
            check_finite_loss(loss.item(), params.step)
            loss.backward()
            adam_step(params, config.lr)
            total += loss.item() * len(idx)
        model.loss_history.append(total / n)
    return model


def reconstruction_mse(model: VaeModel, patches) -> float:
    """Mean per-pixel squared error when decoding the posterior mean."""
    x = _check_patches(model, patches)
    mu, _ = vae_encode(model, x)
    return float(np.mean((vae_decode(model, mu) - x) ** 2))


def extract_patch(image, base: float = DEFAULT_BASE, threshold: float = DEFAULT_THRESHOLD,
                  patch_size: int = 32) -> np.ndarray:
    img = image.pixels if hasattr(image, "pixels") else np.asarray(image)
    return clip_patch(img, locate(saliency(img, base), threshold), patch_size)


def pipeline_features(vae: VaeModel, image, base: float = DEFAULT_BASE,
                      threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """saliency -> locate -> clip -> encode; returns the posterior mean."""
    patch = extract_patch(image, base, threshold, vae.config.patch_size)
    return vae_encode(vae, patch)[0]


def batch_pipeline_features(vae: VaeModel, images: Sequence, base: float = DEFAULT_BASE,
                            threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    patches = np.stack([extract_patch(im, base, threshold, vae.config.patch_size)
                        for im in images])
    return vae_encode(vae, patches)[0]
