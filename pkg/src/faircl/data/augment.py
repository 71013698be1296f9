from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .samples import Sample


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = True
    flip_prob: float = 0.5
    max_rotation: float = 10.0
    pixel_noise: float = 0.01
    vector_jitter: float = 0.05


def _augment_image(img: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    out = img
    if rng.random() < cfg.flip_prob:
        out = out[:, :, ::-1]
    if cfg.max_rotation > 0:
        angle = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
        out = ndimage.rotate(out, angle, axes=(2, 1), reshape=False, order=1, mode="nearest")
    if cfg.pixel_noise > 0:
        out = out + cfg.pixel_noise * rng.normal(size=out.shape)
    return np.ascontiguousarray(out)


def augment_features(x: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    """Augment one feature array (C,H,W image or D vector); identity when disabled."""
    if not cfg.enabled:
        return x
    if np.ndim(x) == 3:
        return _augment_image(x, cfg, rng)
    return x + cfg.vector_jitter * rng.normal(size=np.shape(x))


def augment(sample: Sample, cfg: AugmentConfig, rng) -> Sample:
    """Randomly perturbed copy of ``sample``; label and domain are never touched."""
    if not cfg.enabled:
        return sample
    return Sample(augment_features(sample.features, cfg, rng), sample.label, sample.domain, sample.split,
                  sample.source)


def augment_batch(x: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    if not cfg.enabled:
        return x
    if x.ndim == 2:
        return (x + cfg.vector_jitter * rng.normal(size=x.shape)).astype(x.dtype)
    return np.stack([_augment_image(xi, cfg, rng) for xi in x]).astype(x.dtype)
