from __future__ import annotations

import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True, eq=False)
class Sample:
    features: np.ndarray
    label: Union[int, np.ndarray]
    domain: str
    split: str = "train"
    source: Optional[str] = None

    def __post_init__(self):
        if not self.domain:
            raise ValueError("sample domain must be non-empty")
        if self.split not in ("train", "test", ""):
            raise ValueError(f"split must be 'train', 'test' or empty, got {self.split!r}")

    def label_key(self):
        """Hashable form of the label (int, or a '0101' bit string for AU vectors)."""
        if np.ndim(self.label) == 0:
            return int(self.label)
        return "".join(str(int(v)) for v in self.label)

    def key(self):
        return (self.domain, self.split, self.label_key(), np.asarray(self.features).tobytes())

    def with_split(self, split: str) -> "Sample":
        return Sample(self.features, self.label, self.domain, split, self.source)


@dataclass
class Episode:
    domain: str
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    position: int = 0

    def __post_init__(self):
        for s in list(self.train) + list(self.test):
            if s.domain != self.domain:
                raise ValueError(f"sample of domain {s.domain!r} in episode {self.domain!r}")
        if {id(s) for s in self.train} & {id(s) for s in self.test}:
            raise ValueError("train and test samples overlap")


class Arrays(NamedTuple):
    """Stacked samples: features, labels and integer domain ids."""

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray

    def __len__(self):
        return len(self.y)

    def take(self, idx) -> "Arrays":
        return Arrays(self.x[idx], self.y[idx], self.d[idx])


def stack(samples: Sequence[Sample], domain_index: dict, dtype=np.float64) -> Arrays:
    if not samples:
        return Arrays(np.zeros((0,)), np.zeros((0,), dtype=np.int64), np.zeros((0,), dtype=np.int64))
    x = np.stack([np.asarray(s.features, dtype=dtype) for s in samples])
    y = np.stack([np.asarray(s.label, dtype=np.int64) for s in samples])
    d = np.array([domain_index[s.domain] for s in samples], dtype=np.int64)
    return Arrays(x, y, d)


def concat(parts: Sequence[Arrays]) -> Arrays:
    parts = [p for p in parts if len(p)]
    return Arrays(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]),
                  np.concatenate([p.d for p in parts]))


def split_episodes(samples: Sequence[Sample], order: Union[str, Sequence[str], None] = "descending") -> list[Episode]:
    """One episode per domain.

    ``order`` is ``"descending"`` (most training samples first, ties by name),
    ``"ascending"``, ``"name"``, or an explicit list of domain names.
    """
    by_domain: dict[str, list] = defaultdict(list)
    for s in samples:
        by_domain[s.domain].append(s)
    if len(by_domain) < 2:
        raise ValueError("need at least 2 distinct domains for an incremental stream")
    train_count = {d: sum(s.split == "train" for s in ss) for d, ss in by_domain.items()}
    if order is None or order == "descending":
        names = sorted(by_domain, key=lambda d: (-train_count[d], d))
    elif order == "ascending":
        names = sorted(by_domain, key=lambda d: (train_count[d], d))
    elif order == "name":
        names = sorted(by_domain)
    else:
        names = list(order)
        if sorted(names) != sorted(by_domain):
            raise ValueError(f"explicit order {names} does not match domains {sorted(by_domain)}")
    return [Episode(d, [s for s in by_domain[d] if s.split == "train"],
                    [s for s in by_domain[d] if s.split == "test"], pos)
            for pos, d in enumerate(names)]


def stratified_split(samples: Sequence[Sample], test_fraction: float, seed: int = 0):
    """Hold out ``test_fraction`` of every (domain, label) stratum.

    Strata with fewer than 2 samples go entirely to train, with a warning.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    strata: dict = defaultdict(list)
    for i, s in enumerate(samples):
        strata[(s.domain, str(s.label_key()))].append(i)
    rng = np.random.default_rng(seed)
    test_idx = set()
    for key in sorted(strata):
        idx = strata[key]
        if len(idx) < 2:
            warnings.warn(f"stratum {key} has {len(idx)} sample(s); kept in train", stacklevel=2)
            continue
        n_test = min(len(idx) - 1, max(1, int(round(len(idx) * test_fraction))))
        for j in rng.permutation(len(idx))[:n_test]:
            test_idx.add(idx[j])
    train = [s.with_split("train") for i, s in enumerate(samples) if i not in test_idx]
    test = [s.with_split("test") for i, s in enumerate(samples) if i in test_idx]
    return train, test


def domain_counts(samples: Sequence[Sample], split: Optional[str] = None) -> dict[str, int]:
    c = Counter(s.domain for s in samples if split is None or s.split == split)
    return dict(sorted(c.items()))
