"""Degree histograms of a single snapshot."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EmpiricalStats:
    """Sparse degree histogram of ``G(t)``.

    ``ks`` are the distinct degrees in increasing order and ``counts`` the
    matching ``N_k(t)``.  ``total_weight`` is ``L_t`` when known.
    """

    t: int
    ks: np.ndarray
    counts: np.ndarray
    total_weight: int | None = None

    @classmethod
    def from_degrees(cls, degrees, t: int | None = None, total_weight: int | None = None):
        degrees = np.asarray(degrees)
        ks, counts = np.unique(degrees, return_counts=True)
        t = len(degrees) - 1 if t is None else int(t)
        return cls(t, ks.astype(np.int64), counts.astype(np.int64), total_weight)

    @property
    def n_vertices(self) -> int:
        return int(self.counts.sum())

    def N(self, k) -> np.ndarray:
        """``N_k(t)`` for scalar or array ``k`` (zero off support)."""
        k = np.asarray(k)
        idx = np.clip(np.searchsorted(self.ks, k), 0, len(self.ks) - 1)
        return np.where(self.ks[idx] == k, self.counts[idx], 0)[()]

    def p(self, k) -> np.ndarray:
        return self.N(k) / (self.t + 1)

    @property
    def p_k(self) -> np.ndarray:
        return self.counts / (self.t + 1)

    def N_geq(self, k) -> np.ndarray:
        """``N_{>=k}(t)`` for scalar or array ``k``."""
        suffix = np.append(np.cumsum(self.counts[::-1])[::-1], 0)
        return suffix[np.searchsorted(self.ks, np.asarray(k), side="left")][()]

    def p_geq(self, k) -> np.ndarray:
        return self.N_geq(k) / (self.t + 1)

    def dense(self, k_max: int) -> np.ndarray:
        """``N_k`` for ``k = 0..k_max`` (degrees above ``k_max`` dropped)."""
        out = np.zeros(k_max + 1, np.int64)
        keep = self.ks <= k_max
        out[self.ks[keep]] = self.counts[keep]
        return out

    def top_degrees(self, n: int) -> np.ndarray:
        """The ``n`` largest degrees, in decreasing order."""
        out = np.empty(n, np.int64)
        filled = 0
        for k, c in zip(self.ks[::-1], self.counts[::-1]):
            take = min(int(c), n - filled)
            out[filled:filled + take] = k
            filled += take
            if filled == n:
                break
        return out[:filled]

    def to_csv(self) -> str:
        lines = ["k,N_k,p_k,p_geq_k"]
        n = self.t + 1
        geq = self.N_geq(self.ks)
        for k, c, g in zip(self.ks, self.counts, geq):
            lines.append(f"{int(k)},{int(c)},{float(c / n)!r},{float(g / n)!r}")
        return "\n".join(lines) + "\n"
