"""Reservoir-sampled replay buffer for naive rehearsal."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data.samples import Arrays


@dataclass
class ReplayBuffer:
    capacity: int
    rng_seed: int = 0
    seen_count: int = 0
    slots: list = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.rng = np.random.default_rng(self.rng_seed)

    def __len__(self):
        return len(self.slots)

    def arrays(self) -> Arrays:
        x, y, d = zip(*self.slots)
        return Arrays(np.stack(x), np.stack(y), np.asarray(d, dtype=np.int64))


def buffer_insert(buffer: ReplayBuffer, sample) -> ReplayBuffer:
    """Algorithm R: the n-th item replaces a uniform slot with probability capacity / n."""
    buffer.seen_count += 1
    if buffer.capacity == 0:
        return buffer
    if len(buffer.slots) < buffer.capacity:
        buffer.slots.append(sample)
    else:
        j = int(buffer.rng.integers(0, buffer.seen_count))
        if j < buffer.capacity:
            buffer.slots[j] = sample
    return buffer


def buffer_insert_arrays(buffer: ReplayBuffer, data: Arrays) -> ReplayBuffer:
    for i in range(len(data)):
        buffer_insert(buffer, (data.x[i], data.y[i], int(data.d[i])))
    return buffer


def buffer_minibatch(buffer: ReplayBuffer, current: Arrays, batch_size: int) -> tuple[Arrays, int]:
    """Mix replayed and current samples half and half.

    Returns the mixed batch (old rows first) and the number of old rows. A
    full batch takes ceil(B/2) old and floor(B/2) new rows; a short final
    chunk of new rows is matched one-for-one. An empty buffer yields the
    current rows unchanged.
    """
    if not buffer.slots:
        return current.take(slice(0, batch_size)), 0
    n_new = min(batch_size // 2, len(current))
    n_old = batch_size - batch_size // 2 if n_new == batch_size // 2 else n_new
    replace = n_old > len(buffer.slots)
    pick = buffer.rng.choice(len(buffer.slots), size=n_old, replace=replace)
    old = [buffer.slots[i] for i in pick]
    x = np.concatenate([np.stack([o[0] for o in old]), current.x[:n_new]])
    y = np.concatenate([np.stack([o[1] for o in old]), current.y[:n_new]])
    d = np.concatenate([np.asarray([o[2] for o in old], dtype=np.int64), current.d[:n_new]])
    return Arrays(x, y, d), n_old
