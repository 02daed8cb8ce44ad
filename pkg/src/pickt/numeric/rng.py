"""Deterministic, splittable randomness.

One 64-bit seed fans out into independent Philox streams addressed by an
integer path (seed -> child(3) -> child(0) ...), so every consumer of
randomness (init, dropout, shuffling, synthesis) owns a stream whose draws
never depend on call order elsewhere in the program.
"""

from __future__ import annotations

import numpy as np

from .tensor import default_dtype


class Rng:
    """Counter-based generator; ``child(*key)`` derives an independent stream."""

    def __init__(self, seed: int, _path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(int(k) for k in _path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *key: int) -> "Rng":
        return Rng(self.seed, self.path + tuple(key))

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        # drawn in float64 then cast, so a stream's sequence is stable
        draw = self._gen.standard_normal(shape)
        return (mean + std * draw).astype(default_dtype())

    def uniform(self, shape) -> np.ndarray:
        return self._gen.random(shape).astype(default_dtype())

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def shuffle(self, items: list) -> None:
        perm = self._gen.permutation(len(items))
        items[:] = [items[i] for i in perm]

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)
