"""Flat indexing of unordered arm pairs, self-pairs included.

Pairs ``(i, j)`` with ``i <= j`` are laid out row-major over the upper
triangle of a K x K matrix, diagonal included::

    k = 3:  (0,0)->0  (0,1)->1  (0,2)->2  (1,1)->3  (1,2)->4  (2,2)->5

All indices are 0-based.  Run logs that record flat pair indices use this
layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def n_pairs(k: int) -> int:
    return k * (k + 1) // 2


@dataclass(frozen=True)
class PairIndexMap:
    k: int
    kbar: int = field(init=False)
    first: np.ndarray = field(init=False, repr=False, compare=False)
    second: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"need at least one arm, got k={self.k}")
        object.__setattr__(self, "kbar", n_pairs(self.k))
        first, second = np.triu_indices(self.k)
        first.flags.writeable = False
        second.flags.writeable = False
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)

    def pair_to_index(self, i: int, j: int) -> int:
        if not 0 <= i <= j < self.k:
            raise ValueError(f"pair ({i}, {j}) is not a canonical pair for k={self.k}")
        return i * self.k - i * (i - 1) // 2 + (j - i)

    def index_to_pair(self, idx: int) -> tuple[int, int]:
        if not 0 <= idx < self.kbar:
            raise ValueError(f"pair index {idx} out of range for k={self.k}")
        # row i starts at i*k - i*(i-1)/2; invert the quadratic then fix rounding
        k = self.k
        b = 2 * k + 1
        i = int((b - np.sqrt(b * b - 8 * idx)) // 2)
        while i > 0 and self._row_start(i) > idx:
            i -= 1
        while i + 1 < k and self._row_start(i + 1) <= idx:
            i += 1
        return i, i + idx - self._row_start(i)

    def _row_start(self, i: int) -> int:
        return i * self.k - i * (i - 1) // 2

    def index_matrix(self) -> np.ndarray:
        """Symmetric K x K array of flat indices, handy for vectorised lookups."""
        out = np.empty((self.k, self.k), dtype=np.int64)
        idx = np.arange(self.kbar)
        out[self.first, self.second] = idx
        out[self.second, self.first] = idx
        return out
