"""Raw-image front end: saliency localisation, patch clipping and the patch VAE."""

from .saliency import (DEFAULT_BASE, DEFAULT_THRESHOLD, BBox, NoObjectError, SaliencyMap,
                       clip_patch, iou, locate, saliency)
from .vae import (VAEConfig, VaeModel, elbo_loss, elbo_terms, extract_patch, kl_term,
                  pipeline_features, reconstruction_mse, train_vae, vae_decode, vae_encode)

__all__ = [
    "DEFAULT_BASE", "DEFAULT_THRESHOLD", "BBox", "NoObjectError", "SaliencyMap", "VAEConfig",
    "VaeModel", "clip_patch", "elbo_loss", "elbo_terms", "extract_patch", "iou", "kl_term",
    "locate", "pipeline_features", "reconstruction_mse", "saliency", "train_vae", "vae_decode",
    "vae_encode",
]
