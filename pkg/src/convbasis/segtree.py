"""Array-backed segment tree over vector payloads.

Iterative over next-power-of-two leaves; node payloads are k-vectors and the
aggregate is the sum. Immutable after build. A closed range query touches at
most 2*ceil(log2 n) nodes.
"""

import numpy as np

from .fourier import next_pow2


class SegmentTree:
    def __init__(self, leaves):
        leaves = np.ascontiguousarray(leaves, dtype=np.float64)
        if leaves.ndim != 2 or leaves.shape[0] < 1:
            raise ValueError(f"leaves must be (n, k) with n >= 1, got {leaves.shape}")
        self.n, self.k = leaves.shape
        self.size = next_pow2(self.n)
        self.nodes = np.zeros((2 * self.size, self.k))
        self.nodes[self.size : self.size + self.n] = leaves
        for i in range(self.size - 1, 0, -1):
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1]

    def range_nodes(self, lo, hi):
        """Node indices whose payloads sum to leaves[lo..hi] inclusive."""
        if not 0 <= lo <= hi < self.n:
            raise ValueError(f"invalid range [{lo}, {hi}] for n={self.n}")
        out = []
        lo += self.size
        hi += self.size + 1
        while lo < hi:
            if lo & 1:
                out.append(lo)
                lo += 1
            if hi & 1:
                hi -= 1
                out.append(hi)
            lo >>= 1
            hi >>= 1
        return out

    def range_sum(self, lo, hi):
        """Sum of leaf vectors lo..hi inclusive."""
        acc = np.zeros(self.k)
        for i in self.range_nodes(lo, hi):
            acc += self.nodes[i]
        return acc
