"""Initial-degree laws.

Three families are supported, all on the positive integers:

* :class:`Constant` -- a point mass at ``m``;
* :class:`ZetaPowerLaw` -- ``r_k = k**-tau_w / hurwitz_zeta(tau_w, k_min)`` for ``k >= k_min``;
* :class:`Explicit` -- a finite table of ``(k, r_k)`` pairs.

Each exposes ``pmf``, ``ccdf`` (``P(W > x)``), ``mean``, ``sample`` and the
norming quantile ``a_n = sup{x : P(W > x) >= 1/n}`` used to scale sums of
infinite-mean weights.  Distributions are immutable once built.

Spec strings (CLI and config files)::

    const:m=3
    zeta:tau=2.5,kmin=1
    explicit:1=0.5,2=0.5
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import zeta as hurwitz_zeta

# Table cutoff for the zeta sampler: the smallest k whose tail mass drops
# below 2**-32, but never more than this many entries.
_TAIL_TARGET = 2.0**-32
_MAX_TABLE = 2**16

# Largest draw representable as an int64 degree with headroom for sums.
MAX_INT_DRAW = 2**62


class NormingQuantile(NamedTuple):
    value: int
    at_support_max: bool


class WeightDistribution:
    """Base class; concrete laws override the hooks below."""

    min_support: int
    max_support: int | None = None
    tau_w: float = math.inf

    def pmf(self, k):
        raise NotImplementedError

    def ccdf(self, x):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def moment(self, s: float) -> float:
        """``E[W**s]`` (``inf`` when it diverges)."""
        raise NotImplementedError

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` draws as float64 (exact integers below 2**53)."""
        raise NotImplementedError

    @property
    def spec(self) -> str:
        raise NotImplementedError

    @property
    def has_finite_mean(self) -> bool:
        return math.isfinite(self.mean)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        n = 1 if size is None else int(size)
        draws = self._draw(rng, n)
        if n and draws.max() >= MAX_INT_DRAW:
            raise OverflowError(
                f"weight draw {draws.max():.3g} exceeds the int64 degree range")
        out = draws.astype(np.int64)
        return int(out[0]) if size is None else out

    def sample_float(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draws as float64; no overflow check (for sums like ``L_t``)."""
        return self._draw(rng, int(size))

    def norming_quantile(self, n: int) -> NormingQuantile:
        """Largest integer ``a`` with ``P(W > a) >= 1/n``.

        For bounded laws whose top atom carries mass ``>= 1/n`` the supremum
        of ``{x : P(W > x) >= 1/n}`` is the support maximum itself; that
        value is returned with ``at_support_max`` set.
        """
        n = int(n)
        if n < 1:
            raise ValueError("n must be >= 1")
        level = 1.0 / n
        lo = 0  # ccdf(0) == 1 >= level
        if self.max_support is not None:
            hi = self.max_support
        else:
            hi = max(2 * self.min_support, 2)
            while self.ccdf(hi) >= level:
                hi *= 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.ccdf(mid) >= level:
                lo = mid
            else:
                hi = mid
        if self.max_support is not None and lo + 1 == self.max_support:
            return NormingQuantile(self.max_support, True)
        return NormingQuantile(lo, False)

    def __str__(self) -> str:
        return self.spec


@dataclass(frozen=True)
class Constant(WeightDistribution):
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"constant weight must be a positive integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def min_support(self) -> int:
        return self.m

    @property
    def max_support(self) -> int:
        return self.m

    def pmf(self, k):
        return np.where(np.asarray(k) == self.m, 1.0, 0.0)[()]

    def ccdf(self, x):
        return np.where(np.asarray(x, dtype=float) < self.m, 1.0, 0.0)[()]

    @property
    def mean(self) -> float:
        return float(self.m)

    def moment(self, s: float) -> float:
        return float(self.m) ** s

    def _draw(self, rng, n):
        return np.full(n, float(self.m))

    @property
    def spec(self) -> str:
        return f"const:m={self.m}"


@dataclass(frozen=True)
class Explicit(WeightDistribution):
    """Finite table; ``ks`` strictly increasing positive integers."""

    ks: tuple
    probs: tuple
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)
    _tail: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ks = tuple(int(k) for k in self.ks)
        probs = tuple(float(p) for p in self.probs)
        if not ks or len(ks) != len(probs):
            raise ValueError("explicit table needs matching, non-empty k and r_k lists")
        if ks[0] < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("explicit support must be strictly increasing positive integers")
        if any(p < 0 for p in probs):
            raise ValueError("explicit probabilities must be non-negative")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"explicit probabilities sum to {math.fsum(probs)!r}, not 1")
        # drop zero atoms so min/max support are honest
        kept = [(k, p) for k, p in zip(ks, probs) if p > 0]
        object.__setattr__(self, "ks", tuple(k for k, _ in kept))
        object.__setattr__(self, "probs", tuple(p for _, p in kept))
        p = np.array(self.probs)
        object.__setattr__(self, "_cdf", np.cumsum(p))
        # tail[j] = sum of probs[j:], summed from the top so small tails stay exact
        object.__setattr__(self, "_tail", np.cumsum(p[::-1])[::-1])

    @property
    def min_support(self) -> int:
        return self.ks[0]

    @property
    def max_support(self) -> int:
        return self.ks[-1]

    def pmf(self, k):
        k = np.asarray(k)
        ks = np.array(self.ks)
        idx = np.clip(np.searchsorted(ks, k), 0, len(ks) - 1)
        return np.where(ks[idx] == k, np.array(self.probs)[idx], 0.0)[()]

    def ccdf(self, x):
        x = np.asarray(x, dtype=float)
        # first atom strictly above x
        idx = np.searchsorted(np.array(self.ks, dtype=float), x, side="right")
        tail = np.append(self._tail, 0.0)
        # below the support the tail is 1 exactly, not a rounded sum
        return np.where(idx == 0, 1.0, tail[idx])[()]

    @property
    def mean(self) -> float:
        return math.fsum(k * p for k, p in zip(self.ks, self.probs))

    def moment(self, s: float) -> float:
        return math.fsum(float(k) ** s * p for k, p in zip(self.ks, self.probs))

    def _draw(self, rng, n):
        u = rng.random(n)
        idx = np.minimum(np.searchsorted(self._cdf, u, side="right"), len(self.ks) - 1)
        return np.array(self.ks, dtype=float)[idx]

    @property
    def spec(self) -> str:
        return "explicit:" + ",".join(f"{k}={p!r}" for k, p in zip(self.ks, self.probs))


@dataclass(frozen=True)
class ZetaPowerLaw(WeightDistribution):
    """``P(W = k) proportional to k**-tau_w`` on ``k >= k_min``.

    Sampling inverts a cdf table up to a cutoff and draws the remaining
    tail exactly by rejection from a continuous Pareto proposal.
    """

    tau_w: float
    k_min: int = 1
    _norm: float = field(init=False, repr=False, compare=False)
    _cutoff: int = field(init=False, repr=False, compare=False)
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.tau_w > 1:
            raise ValueError(f"zeta exponent must exceed 1, got {self.tau_w}")
        if int(self.k_min) != self.k_min or self.k_min < 1:
            raise ValueError(f"k_min must be a positive integer, got {self.k_min}")
        object.__setattr__(self, "tau_w", float(self.tau_w))
        object.__setattr__(self, "k_min", int(self.k_min))
        object.__setattr__(self, "_norm", float(hurwitz_zeta(self.tau_w, self.k_min)))
        cutoff = self._find_cutoff()
        object.__setattr__(self, "_cutoff", cutoff)
        ks = np.arange(self.k_min, cutoff, dtype=float)
        object.__setattr__(self, "_cdf", 1.0 - self._tail_from(ks + 1))

    def _tail_from(self, k):
        """``P(W >= k)`` for ``k >= k_min``."""
        return hurwitz_zeta(self.tau_w, k) / self._norm

    def _find_cutoff(self) -> int:
        lo, hi = self.k_min + 1, self.k_min + _MAX_TABLE
        if self._tail_from(float(hi)) >= _TAIL_TARGET:
            return hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self._tail_from(float(mid)) < _TAIL_TARGET:
                hi = mid
            else:
                lo = mid
        return hi

    @property
    def min_support(self) -> int:
        return self.k_min

    def pmf(self, k):
        k = np.asarray(k, dtype=float)
        safe = np.maximum(k, 1.0)
        return np.where(k >= self.k_min, safe**-self.tau_w / self._norm, 0.0)[()]

    def ccdf(self, x):
        x = np.asarray(x, dtype=float)
        above = np.maximum(np.floor(x) + 1.0, float(self.k_min))
        return np.where(x < self.k_min, 1.0, self._tail_from(above))[()]

    @property
    def mean(self) -> float:
        if self.tau_w <= 2:
            return math.inf
        return float(hurwitz_zeta(self.tau_w - 1.0, self.k_min)) / self._norm

    def moment(self, s: float) -> float:
        if self.tau_w - s <= 1:
            return math.inf
        return float(hurwitz_zeta(self.tau_w - s, self.k_min)) / self._norm

    def _draw(self, rng, n):
        u = rng.random(n)
        out = self.k_min + np.searchsorted(self._cdf, u, side="right").astype(float)
        tail = u >= (self._cdf[-1] if len(self._cdf) else 0.0)
        n_tail = int(tail.sum())
        if n_tail:
            out[tail] = self._draw_tail(rng, n_tail)
        return out

    def _draw_tail(self, rng, n):
        # proposal floor(Y), Y Pareto on [K, inf); target/proposal ratio lies
        # in [1, (1 + 1/K)**tau], so accept with ratio / (1 + 1/K)**tau
        K = float(self._cutoff)
        tau = self.tau_w
        bound = (1.0 + 1.0 / K) ** tau
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = n - filled
            v = 1.0 - rng.random(m)
            j = np.floor(K * v ** (-1.0 / (tau - 1.0)))
            ratio = (tau - 1.0) / (j * -np.expm1((1.0 - tau) * np.log1p(1.0 / j)))
            ok = rng.random(m) * bound <= ratio
            got = j[ok]
            out[filled:filled + len(got)] = got
            filled += len(got)
        return out

    @property
    def spec(self) -> str:
        return f"zeta:tau={self.tau_w!r},kmin={self.k_min}"


def parse_weights(text: str) -> WeightDistribution:
    """Build a distribution from its spec string (see module docstring)."""
    text = text.strip()
    kind, sep, rest = text.partition(":")
    if not sep:
        raise ValueError(f"weight spec {text!r} lacks a 'kind:' prefix")
    kind = kind.strip().lower()
    pairs = []
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"weight spec item {item!r} is not key=value")
        pairs.append((key.strip().lower(), value.strip()))
    try:
        if kind == "const":
            opts = dict(pairs)
            _only(opts, {"m"}, kind)
            return Constant(int(opts["m"]))
        if kind == "zeta":
            opts = dict(pairs)
            _only(opts, {"tau", "kmin"}, kind)
            return ZetaPowerLaw(float(opts["tau"]), int(opts.get("kmin", 1)))
        if kind == "explicit":
            return Explicit(tuple(int(k) for k, _ in pairs), tuple(float(p) for _, p in pairs))
    except KeyError as exc:
        raise ValueError(f"weight spec {text!r} is missing {exc.args[0]!r}") from None
    raise ValueError(f"unknown weight kind {kind!r} (expected const, zeta or explicit)")


def _only(opts, allowed, kind):
    extra = set(opts) - allowed
    if extra:
        raise ValueError(f"unknown key(s) {sorted(extra)} for {kind} weights")
