"""Limiting degree distribution and power-law exponents.

For a weight law ``r_k`` with finite mean ``mu`` and shift ``delta`` the
limit ``p_k`` solves

    p_k = (k - 1 + delta)/theta * p_{k-1} - (k + delta)/theta * p_k + r_k,

with ``theta = 2 + delta/mu``.  It is evaluated by the forward form

    p_k = ((k - 1 + delta) p_{k-1} + theta r_k) / (k + delta + theta),

whose terms are all non-negative, so it neither cancels nor underflows the
way the explicit product solution does.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .weights import WeightDistribution

DEFAULT_K_MAX = 10**6


class UnsupportedRegimeError(ValueError):
    """Raised for infinite-mean weights, where no limit law is known."""


class Exponents(NamedTuple):
    tau_w: float
    tau_p: float | None
    tau: float


@dataclass(frozen=True)
class TheoreticalDegreeDistribution:
    theta: float
    delta: float
    p: np.ndarray  # p[k - 1] = p_k, k = 1..k_max
    tail_mass: float
    tau_w: float
    tau_p: float
    tau: float

    @property
    def k_max(self) -> int:
        return len(self.p)

    def pk(self, k):
        """``p_k`` for ``1 <= k <= k_max`` (0 for k < 1, nan above k_max)."""
        k = np.asarray(k)
        idx = np.clip(k - 1, 0, self.k_max - 1)
        out = np.where(k < 1, 0.0, self.p[idx])
        return np.where(k > self.k_max, np.nan, out)[()]

    def header(self) -> dict:
        return {
            "theta": self.theta,
            "delta": self.delta,
            "k_max": self.k_max,
            "tail_mass": self.tail_mass,
            "tau_w": _json_num(self.tau_w),
            "tau_p": _json_num(self.tau_p),
            "tau": _json_num(self.tau),
        }

    def to_csv(self) -> str:
        rows = "\n".join(f"{k},{float(v)!r}" for k, v in enumerate(self.p, start=1))
        return "k,p_k\n" + rows + "\n"

    def header_json(self) -> str:
        return json.dumps(self.header(), indent=2)


def _json_num(x):
    if x is None:
        return None
    return "inf" if math.isinf(x) else x


def theta_of(weights: WeightDistribution, delta: float) -> float:
    return 2.0 + delta / weights.mean


def _check_regime(weights, delta):
    if not weights.has_finite_mean:
        raise UnsupportedRegimeError(
            "the limiting degree law needs finite-mean weights; for infinite-mean "
            "power laws only the exponent tau_w is predicted")
    if not delta + weights.min_support > 0:
        raise ValueError(f"delta={delta} violates delta + min support > 0")


def limit_pk(weights: WeightDistribution, delta: float,
             k_max: int = DEFAULT_K_MAX) -> TheoreticalDegreeDistribution:
    _check_regime(weights, delta)
    delta = float(delta)
    theta = theta_of(weights, delta)
    r = np.asarray(weights.pmf(np.arange(1, k_max + 1)), dtype=float).tolist()
    p = [0.0] * k_max
    prev = 0.0
    for k in range(1, k_max + 1):
        prev = ((k - 1 + delta) * prev + theta * r[k - 1]) / (k + delta + theta)
        p[k - 1] = prev
    p = np.array(p)
    p[: weights.min_support - 1] = 0.0
    tail = max(0.0, 1.0 - math.fsum(p))
    ex = exponents(weights, delta)
    return TheoreticalDegreeDistribution(theta, delta, p, tail, *ex)


def closed_form_constant(m: int, delta: float, k):
    """``p_k`` for constant weights ``m``, via log-gamma.

    ``theta Gamma(k+delta) Gamma(m+delta+theta) / (Gamma(m+delta) Gamma(k+1+delta+theta))``
    for ``k >= m``, zero below.
    """
    if not m + delta > 0:
        raise ValueError(f"delta={delta} violates delta + m > 0")
    theta = 2.0 + delta / m
    k = np.asarray(k, dtype=float)
    kk = np.maximum(k, m)
    assert np.all(kk + delta > 0)
    logp = (math.log(theta) + gammaln(kk + delta) + gammaln(m + delta + theta)
            - gammaln(m + delta) - gammaln(kk + 1 + delta + theta))
    return np.where(k >= m, np.exp(logp), 0.0)[()]


def exponents(weights: WeightDistribution, delta: float) -> Exponents:
    """``(tau_w, tau_p, tau)`` with ``tau_p = 3 + delta/mu`` and ``tau = min``.

    Laws decaying faster than any power have ``tau_w = inf``.  With infinite
    mean ``tau_p`` is undefined (``None``) and ``tau`` is the conjectured
    ``tau_w``.
    """
    tau_w = float(weights.tau_w)
    if not weights.has_finite_mean:
        return Exponents(tau_w, None, tau_w)
    tau_p = 3.0 + delta / weights.mean
    return Exponents(tau_w, tau_p, min(tau_w, tau_p))


def asymptotic_slope(dist: TheoreticalDegreeDistribution, k_lo: int, k_hi: int) -> float:
    """Least-squares slope of ``log p_k`` against ``log k`` on ``[k_lo, k_hi]``."""
    if not 1 <= k_lo < k_hi <= dist.k_max:
        raise ValueError(f"need 1 <= k_lo < k_hi <= k_max, got [{k_lo}, {k_hi}]")
    ks = np.arange(k_lo, k_hi + 1)
    p = dist.p[ks - 1]
    if np.any(p <= 0):
        raise ValueError("p_k vanishes inside the fitting range")
    return float(np.polyfit(np.log(ks), np.log(p), 1)[0])
