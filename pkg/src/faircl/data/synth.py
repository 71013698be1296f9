"""Synthetic domain-shifted datasets.

Vector / expression: class prototypes sit evenly on a circle of radius
``prototype_scale`` inside a random 2-plane. Domain k turns that circle by
``shift * k / K`` of the angular gap between neighbouring classes and adds an
offset outside the plane, so domains overlap with interleaved class arcs. A
model fit to one domain alone puts its boundaries across the other domain's
classes; a model fit to all domains can still separate every class. At
``shift = 0`` all domains share one distribution.

Vector / au: action-unit prototypes are random directions. A sample's centre
is the sum of its active units' prototypes, and each domain applies a random
rotation plus offset scaled by ``shift``.

Image mode draws class-specific binary patches on a blank canvas and
moves/brightens them per domain. Pixels are quantised to k/255 so the PNG
export round-trips.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .samples import Sample


@dataclass(frozen=True)
class SynthConfig:
    mode: str = "vector"
    task: str = "expression"
    num_domains: int = 2
    num_classes: int = 5
    dim: int = 16
    image_size: int = 32
    n_samples: int = 2000
    imbalance: tuple = (0.8, 0.2)
    shift: float = 1.4
    noise: float = 0.4
    prototype_scale: float = 4.0
    offset_scale: float = 0.5
    au_rate: float = 0.3
    test_fraction: float = 0.25
    seed: int = 0
    domain_names: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in ("vector", "image"):
            raise ValueError(f"mode must be 'vector' or 'image', got {self.mode!r}")
        if self.task not in ("expression", "au"):
            raise ValueError(f"task must be 'expression' or 'au', got {self.task!r}")
        if self.num_domains < 2:
            raise ValueError("need at least 2 domains")
        if self.task == "expression" and self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.task == "au" and self.num_classes < 1:
            raise ValueError("need at least 1 action unit")
        if len(self.imbalance) != self.num_domains:
            raise ValueError("one imbalance ratio per domain required")
        if any(r <= 0 for r in self.imbalance) or abs(sum(self.imbalance) - 1.0) > 1e-9:
            raise ValueError("imbalance ratios must be positive and sum to 1")
        if self.shift < 0 or self.noise < 0:
            raise ValueError("shift and noise must be non-negative")
        if self.mode == "image" and self.image_size < 16:
            raise ValueError("image_size must be at least 16")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.domain_names is not None and len(self.domain_names) != self.num_domains:
            raise ValueError("one name per domain required")
        if self.n_samples < self.num_domains:
            raise ValueError("n_samples must cover every domain")

    @property
    def names(self) -> tuple:
        return tuple(self.domain_names) if self.domain_names else tuple(f"d{k}" for k in range(self.num_domains))

    @property
    def input_shape(self) -> tuple:
        return (self.dim,) if self.mode == "vector" else (1, self.image_size, self.image_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["imbalance"] = list(self.imbalance)
        d["domain_names"] = list(self.names)
        return d


def domain_sizes(n: int, ratios) -> list[int]:
    """Largest-remainder apportionment of n samples to the given ratios."""
    raw = [n * r for r in ratios]
    base = [int(np.floor(v)) for v in raw]
    rest = n - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


def _labels(cfg: SynthConfig, n: int, rng) -> np.ndarray:
    if cfg.task == "expression":
        return rng.permutation(np.arange(n) % cfg.num_classes)
    y = (rng.random((n, cfg.num_classes)) < cfg.au_rate).astype(np.int64)
    return y


def _rotation(dim: int, strength: float, rng) -> np.ndarray:
    g = rng.normal(size=(dim, dim))
    skew = (g - g.T) * (np.pi / np.sqrt(2.0 * dim))
    return expm(strength * skew)


def _class_plane(cfg, rng):
    """Orthonormal basis (D, D) whose first two columns span the class plane."""
    q, _ = np.linalg.qr(rng.normal(size=(cfg.dim, cfg.dim)))
    phase = rng.uniform(0, 2 * np.pi)
    return q, phase


def _vector_domain(cfg, shared_draws, y, rng, drng, k):
    noise = cfg.noise * rng.normal(size=(len(y), cfg.dim))
    if cfg.task == "au":
        protos = shared_draws
        rot = _rotation(cfg.dim, cfg.shift, drng)
        offset = cfg.shift * cfg.offset_scale * drng.normal(size=cfg.dim)
        return (y @ protos) @ rot.T + offset + noise
    basis, phase = shared_draws
    m = cfg.num_classes
    turn = cfg.shift * (k / cfg.num_domains) * (2 * np.pi / m)
    ang = phase + 2 * np.pi * y / m + turn
    centers = cfg.prototype_scale * (np.cos(ang)[:, None] * basis[:, 0] + np.sin(ang)[:, None] * basis[:, 1])
    # domain offset lives outside the class plane
    off = drng.normal(size=cfg.dim - 2) if cfg.dim > 2 else np.zeros(0)
    offset = cfg.shift * cfg.offset_scale * (basis[:, 2:] @ off)
    return centers + offset + noise


def _patterns(cfg, rng) -> np.ndarray:
    size = 6 if cfg.task == "au" else 8
    return (rng.random((cfg.num_classes, size, size)) < 0.5).astype(np.float64)


def _image_domain(cfg, patterns, y, rng, drng, k):
    s = cfg.image_size
    size = patterns.shape[1]
    # domain shift: patch displacement and brightness change
    dy, dx = np.rint(cfg.shift * drng.uniform(-4, 4, size=2)).astype(int)
    gain = 1.0 - 0.4 * cfg.shift * (k / max(cfg.num_domains - 1, 1))
    bg = 0.3 * cfg.shift * drng.random()
    out = np.full((len(y), 1, s, s), bg)
    if cfg.task == "expression":
        cy = (s - size) // 2 + dy
        cx = (s - size) // 2 + dx
        for i, c in enumerate(y):
            out[i, 0, cy:cy + size, cx:cx + size] += gain * patterns[c]
    else:
        grid = int(np.ceil(np.sqrt(cfg.num_classes)))
        step = max((s - 8) // grid, size)
        for a in range(cfg.num_classes):
            r0 = 4 + (a // grid) * step + dy
            c0 = 4 + (a % grid) * step + dx
            r0 = int(np.clip(r0, 0, s - size))
            c0 = int(np.clip(c0, 0, s - size))
            on = np.flatnonzero(y[:, a])
            out[on, 0, r0:r0 + size, c0:c0 + size] += gain * patterns[a]
    out += 0.05 * cfg.noise * rng.normal(size=out.shape)
    return np.rint(np.clip(out, 0.0, 1.0) * 255.0) / 255.0


def synth_generate(cfg: SynthConfig) -> list[Sample]:
    """Deterministic in ``cfg.seed``; returns train and test samples for every domain."""
    root = np.random.SeedSequence(cfg.seed)
    shared_ss, *domain_ss = root.spawn(1 + cfg.num_domains)
    shared = np.random.default_rng(shared_ss)
    if cfg.mode == "vector" and cfg.task == "au":
        shared_draws = cfg.prototype_scale / np.sqrt(cfg.dim) * shared.normal(size=(cfg.num_classes, cfg.dim))
    elif cfg.mode == "vector":
        shared_draws = _class_plane(cfg, shared)
    else:
        patterns = _patterns(cfg, shared)
    samples: list[Sample] = []
    for k, (name, n_d, ss) in enumerate(zip(cfg.names, domain_sizes(cfg.n_samples, cfg.imbalance), domain_ss)):
        drng_ss, srng_ss = ss.spawn(2)
        drng = np.random.default_rng(drng_ss)  # fixed domain transform
        rng = np.random.default_rng(srng_ss)  # per-sample draws
        y = _labels(cfg, n_d, rng)
        if cfg.mode == "vector":
            x = _vector_domain(cfg, shared_draws, y, rng, drng, k)
        else:
            x = _image_domain(cfg, patterns, y, rng, drng, k)
        n_test = int(round(n_d * cfg.test_fraction))
        is_test = np.zeros(n_d, dtype=bool)
        is_test[rng.permutation(n_d)[:n_test]] = True
        for i in range(n_d):
            label = int(y[i]) if cfg.task == "expression" else y[i].copy()
            samples.append(Sample(x[i], label, name, "test" if is_test[i] else "train"))
    return samples
