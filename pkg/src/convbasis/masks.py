"""Attention mask families.

Each mask class knows its size, can return a single materialized column, and
can materialize the full 0/1 matrix (oracle use only). Indices are 0-based.

Variants:
    CausalMask           W[i,j] = 1 iff i >= j
    RowChangeMask        row supports given by per-row added/removed column sets
    ContinuousRowMask    row i supports columns starts[i]..ends[i] inclusive
    DistinctColumnsMask  columns fall into r groups sharing prototype columns
    DistinctRowsMask     rows fall into r groups sharing prototype rows
    DenseMask            explicit 0/1 matrix
"""

import numpy as np

from .validate import as_index


def _as_binary(a, name):
    m = np.ascontiguousarray(a, dtype=np.float64)
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError(f"{name} must contain only 0/1 entries")
    return m


class Mask:
    """Base class; subclasses set .n and implement column()/materialize()."""

    n = 0

    def column(self, j):
        raise NotImplementedError

    def materialize(self):
        out = np.zeros((self.n, self.n))
        for j in range(self.n):
            out[:, j] = self.column(j)
        return out


class CausalMask(Mask):
    def __init__(self, n):
        n = int(n)
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        self.n = n

    def column(self, j):
        j = as_index(j, self.n)
        col = np.zeros(self.n)
        col[j:] = 1.0
        return col

    def materialize(self):
        return np.tril(np.ones((self.n, self.n)))


class RowChangeMask(Mask):
    """Row supports S_0..S_{n-1} encoded as deltas: S_j = S_{j-1} + added[j] - removed[j].

    added[j] must be disjoint from S_{j-1}, removed[j] a subset of S_{j-1}, and
    no column may appear twice in the same row's delta. change_counts[j] is
    |added[j]| + |removed[j]|, the per-row work bound.
    """

    def __init__(self, n, added, removed):
        n = int(n)
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if len(added) != n or len(removed) != n:
            raise ValueError(
                f"need {n} added/removed sets, got {len(added)}/{len(removed)}"
            )
        self.n = n
        self.added = []
        self.removed = []
        support = set()
        for j in range(n):
            add = [as_index(i, n, f"added[{j}]") for i in added[j]]
            rem = [as_index(i, n, f"removed[{j}]") for i in removed[j]]
            seen = set()
            for i in add + rem:
                if i in seen:
                    raise ValueError(f"column {i} referenced twice in row {j} delta")
                seen.add(i)
            for i in add:
                if i in support:
                    raise ValueError(f"row {j} adds column {i} already in support")
            for i in rem:
                if i not in support:
                    raise ValueError(f"row {j} removes column {i} not in support")
            support.update(add)
            support.difference_update(rem)
            self.added.append(tuple(add))
            self.removed.append(tuple(rem))
        self.change_counts = tuple(
            len(a) + len(r) for a, r in zip(self.added, self.removed)
        )

    @classmethod
    def from_row_supports(cls, supports):
        """Build from explicit per-row column sets."""
        n = len(supports)
        added, removed = [], []
        prev = set()
        for j in range(n):
            cur = set(int(i) for i in supports[j])
            added.append(sorted(cur - prev))
            removed.append(sorted(prev - cur))
            prev = cur
        return cls(n, added, removed)

    @classmethod
    def causal(cls, n):
        """Causal mask as row changes: row j adds column j, removes nothing."""
        return cls(n, [[j] for j in range(n)], [[] for _ in range(n)])

    def deltas_csr(self):
        """Flattened (add_idx, add_ptr, rem_idx, rem_ptr) int64 arrays for kernels."""
        add_ptr = np.zeros(self.n + 1, dtype=np.int64)
        rem_ptr = np.zeros(self.n + 1, dtype=np.int64)
        for j in range(self.n):
            add_ptr[j + 1] = add_ptr[j] + len(self.added[j])
            rem_ptr[j + 1] = rem_ptr[j] + len(self.removed[j])
        add_idx = np.fromiter(
            (i for row in self.added for i in row), dtype=np.int64, count=add_ptr[-1]
        )
        rem_idx = np.fromiter(
            (i for row in self.removed for i in row), dtype=np.int64, count=rem_ptr[-1]
        )
        return add_idx, add_ptr, rem_idx, rem_ptr

    def column(self, j):
        j = as_index(j, self.n)
        col = np.zeros(self.n)
        support = set()
        for r in range(self.n):
            support.update(self.added[r])
            support.difference_update(self.removed[r])
            if j in support:
                col[r] = 1.0
        return col

    def materialize(self):
        out = np.zeros((self.n, self.n))
        support = set()
        for r in range(self.n):
            support.update(self.added[r])
            support.difference_update(self.removed[r])
            for i in support:
                out[r, i] = 1.0
        return out


class ContinuousRowMask(Mask):
    """Row i supports the inclusive column range [starts[i], ends[i]]."""

    def __init__(self, starts, ends):
        starts = np.ascontiguousarray(starts, dtype=np.int64)
        ends = np.ascontiguousarray(ends, dtype=np.int64)
        if starts.ndim != 1 or starts.shape != ends.shape:
            raise ValueError("starts and ends must be 1-D with equal length")
        n = starts.size
        if n < 1:
            raise ValueError("empty mask")
        for i in range(n):
            if not 0 <= starts[i] <= ends[i] <= n - 1:
                raise ValueError(
                    f"row {i}: need 0 <= start <= end <= {n - 1}, "
                    f"got [{starts[i]}, {ends[i]}]"
                )
        self.n = n
        self.starts = starts
        self.ends = ends

    @classmethod
    def causal(cls, n):
        return cls(np.zeros(n, dtype=np.int64), np.arange(n, dtype=np.int64))

    def column(self, j):
        j = as_index(j, self.n)
        return ((self.starts <= j) & (j <= self.ends)).astype(np.float64)

    def materialize(self):
        cols = np.arange(self.n)
        return (
            (self.starts[:, None] <= cols[None, :]) & (cols[None, :] <= self.ends[:, None])
        ).astype(np.float64)


def _check_partition(group_ids, n, r):
    ids = np.ascontiguousarray(group_ids, dtype=np.int64)
    if ids.shape != (n,):
        raise ValueError(f"group ids must have shape ({n},), got {ids.shape}")
    if ids.min() < 0 or ids.max() >= r:
        raise ValueError(f"group ids must lie in [0, {r})")
    counts = np.bincount(ids, minlength=r)
    if np.any(counts == 0):
        raise ValueError(f"every group must be nonempty, counts {counts.tolist()}")
    return ids


class _GroupedMask(Mask):
    """Shared grouping accessors for the distinct-pattern masks."""

    @property
    def num_groups(self):
        return self.r

    def group_members(self, g):
        g = int(g)
        if not 0 <= g < self.r:
            raise IndexError(f"group {g} out of [0, {self.r})")
        return np.nonzero(self.group_ids == g)[0]


class DistinctColumnsMask(_GroupedMask):
    """Columns within a group share a prototype column (n x r, 0/1)."""

    def __init__(self, group_ids, prototypes):
        protos = _as_binary(prototypes, "prototypes")
        if protos.ndim != 2:
            raise ValueError("prototypes must be n x r")
        n, r = protos.shape
        self.n = n
        self.r = r
        self.group_ids = _check_partition(group_ids, n, r)
        self.prototypes = protos

    def column(self, j):
        j = as_index(j, self.n)
        return self.prototypes[:, self.group_ids[j]].copy()

    def materialize(self):
        return self.prototypes[:, self.group_ids]


class DistinctRowsMask(_GroupedMask):
    """Rows within a group share a prototype row (r x n, 0/1)."""

    def __init__(self, group_ids, prototypes):
        protos = _as_binary(prototypes, "prototypes")
        if protos.ndim != 2:
            raise ValueError("prototypes must be r x n")
        r, n = protos.shape
        self.n = n
        self.r = r
        self.group_ids = _check_partition(group_ids, n, r)
        self.prototypes = protos

    def column(self, j):
        j = as_index(j, self.n)
        return self.prototypes[self.group_ids, j].astype(np.float64)

    def materialize(self):
        return self.prototypes[self.group_ids, :]


class DenseMask(Mask):
    def __init__(self, w):
        m = _as_binary(w, "mask")
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"mask must be square, got shape {m.shape}")
        self.n = m.shape[0]
        self.w = m

    def column(self, j):
        j = as_index(j, self.n)
        return self.w[:, j].copy()

    def materialize(self):
        return self.w.copy()


def mask_column(mask, j):
    """Column j of the materialized mask as a 0/1 vector."""
    return mask.column(j)
