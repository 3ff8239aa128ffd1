"""Binary indexed tree over float64 weights, used as a dynamic sampler.

The tree capacity is a power of two, so every aligned block
``(lo, lo + 2**j]`` has its sum stored in a single node.  That gives

* O(log n) point update and prefix sum;
* O(log n) inverse-prefix search (``find``);
* a multinomial draw of ``n`` items by binomial splitting down the
  implicit block hierarchy, O(min(n, size) * log size) work.

Kernels are plain numba functions on a 1-based ``tree`` array of length
``capacity + 1``; :class:`FenwickSampler` wraps them for Python callers.
"""
from __future__ import annotations

import numpy as np
from numba import njit


def capacity_for(n: int) -> int:
    cap = 1
    while cap < n:
        cap *= 2
    return cap


@njit(cache=True)
def fw_build(tree, values, n):
    cap = tree.shape[0] - 1
    tree[:] = 0.0
    for i in range(n):
        tree[i + 1] = values[i]
    for i in range(1, cap + 1):
        j = i + (i & -i)
        if j <= cap:
            tree[j] += tree[i]


@njit(cache=True)
def fw_add(tree, i, delta):
    cap = tree.shape[0] - 1
    j = i + 1
    while j <= cap:
        tree[j] += delta
        j += j & -j


@njit(cache=True)
def fw_prefix(tree, i):
    """Sum of leaves ``0..i-1``."""
    s = 0.0
    j = i
    while j > 0:
        s += tree[j]
        j -= j & -j
    return s


@njit(cache=True)
def fw_find(tree, u):
    """Leaf index of the first prefix sum exceeding ``u``."""
    cap = tree.shape[0] - 1
    pos = 0
    bit = cap
    while bit > 0:
        nxt = pos + bit
        if nxt <= cap and tree[nxt] <= u:
            pos = nxt
            u -= tree[nxt]
        bit >>= 1
    return pos


@njit(cache=True)
def fw_multinomial(tree, n, rng, out_idx, out_cnt):
    """Split ``n`` draws over the leaves; returns the number of hit leaves.

    Hit leaf ``out_idx[j]`` receives ``out_cnt[j]`` draws.
    """
    cap = tree.shape[0] - 1
    st_lo = np.empty(128, np.int64)
    st_size = np.empty(128, np.int64)
    st_n = np.empty(128, np.int64)
    st_sum = np.empty(128, np.float64)
    top = 0
    st_lo[0] = 0
    st_size[0] = cap
    st_n[0] = n
    st_sum[0] = tree[cap]
    top = 1
    nhit = 0
    while top > 0:
        top -= 1
        lo = st_lo[top]
        size = st_size[top]
        k = st_n[top]
        seg = st_sum[top]
        if size == 1:
            out_idx[nhit] = lo
            out_cnt[nhit] = k
            nhit += 1
            continue
        half = size // 2
        left = tree[lo + half]
        right = seg - left
        if right <= 0.0:
            kl = k
        elif left <= 0.0:
            kl = 0
        else:
            p = left / seg
            if p >= 1.0:
                kl = k
            else:
                kl = rng.binomial(k, p)
        if k - kl > 0:
            st_lo[top] = lo + half
            st_size[top] = half
            st_n[top] = k - kl
            st_sum[top] = right
            top += 1
        if kl > 0:
            st_lo[top] = lo
            st_size[top] = half
            st_n[top] = kl
            st_sum[top] = left
            top += 1
    return nhit


@njit(cache=True)
def _draw_many(tree, n_active, rng, size, out):
    total = tree[tree.shape[0] - 1]
    for j in range(size):
        i = fw_find(tree, rng.random() * total)
        if i >= n_active:
            i = n_active - 1
        out[j] = i


class FenwickSampler:
    """Weighted index sampler over ``n`` slots with mutable weights."""

    def __init__(self, weights, capacity: int | None = None):
        weights = np.asarray(weights, dtype=np.float64)
        self.n = len(weights)
        self.capacity = capacity_for(max(capacity or 0, self.n, 1))
        self.tree = np.zeros(self.capacity + 1)
        fw_build(self.tree, weights, self.n)

    @property
    def total(self) -> float:
        return float(self.tree[self.capacity])

    def prefix(self, i: int) -> float:
        return fw_prefix(self.tree, i)

    def weight(self, i: int) -> float:
        return fw_prefix(self.tree, i + 1) - fw_prefix(self.tree, i)

    def add(self, i: int, delta: float) -> None:
        if not 0 <= i < self.capacity:
            raise IndexError(i)
        fw_add(self.tree, i, float(delta))
        self.n = max(self.n, i + 1)

    def set(self, i: int, value: float) -> None:
        self.add(i, value - self.weight(i))

    def find(self, u: float) -> int:
        return min(fw_find(self.tree, float(u)), self.n - 1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty(size, np.int64)
        _draw_many(self.tree, self.n, rng, size, out)
        return out

    def multinomial(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Counts per slot for ``n`` independent draws."""
        idx = np.empty(self.capacity, np.int64)
        cnt = np.empty(self.capacity, np.int64)
        h = fw_multinomial(self.tree, int(n), rng, idx, cnt)
        counts = np.zeros(self.n, np.int64)
        np.add.at(counts, np.minimum(idx[:h], self.n - 1), cnt[:h])
        return counts
