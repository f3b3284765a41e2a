"""Fixed-capacity ring buffer of transitions."""

from __future__ import annotations

from typing import Mapping

import numpy as np


class ReplayBuffer:
    """Stores named arrays per transition; storage is allocated on the first add."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.size = 0
        self.cursor = 0
        self._data: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return self.size

    def add(self, **fields: np.ndarray) -> None:
        if self._data is None:
            self._data = {}
            for k, v in fields.items():
                v = np.asarray(v)
                self._data[k] = np.zeros((self.capacity,) + v.shape, dtype=v.dtype)
        elif set(fields) != set(self._data):
            raise ValueError("transition fields changed")
        for k, v in fields.items():
            self._data[k][self.cursor] = v
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator) -> Mapping[str, np.ndarray]:
        if batch > self.size:
            raise ValueError(f"batch {batch} larger than buffer size {self.size}")
        idx = rng.choice(self.size, size=batch, replace=False)
        return {k: v[idx] for k, v in self._data.items()}

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.size, size=batch, replace=False)
