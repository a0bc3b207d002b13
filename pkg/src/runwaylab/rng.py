"""Deterministic, splittable randomness.

Every stochastic choice in the package flows through an :class:`Rng` that
wraps numpy's counter-based Philox generator. Streams are derived by
*label*, not by draw order: ``rng.split("init").split("layers.3")`` always
yields the same stream regardless of what else was sampled, which is what
makes runs reproducible under code motion and resumable mid-training.
"""

from __future__ import annotations

import hashlib

import numpy as np


class Rng:
    """A named stream of random numbers rooted at a u64 seed."""

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: str = ""):
        if not 0 <= int(seed) < 2 ** 64:
            raise ValueError("seed must fit in u64")
        self.seed = int(seed)
        self.path = path
        digest = hashlib.sha256(f"{self.seed}:{path}".encode()).digest()
        key = int.from_bytes(digest[:16], "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, label: str) -> "Rng":
        """Child stream; independent of draws made on this one."""
        child = f"{self.path}/{label}" if self.path else label
        return Rng(self.seed, child)

    # -- draws ---------------------------------------------------------------

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, std, size=shape)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
