"""Reference computations that share no code with the package.

* exhaustive enumeration of tiny PARID graphs with exact rationals,
* mpmath evaluations of zeta-law quantities,
* Laplace-transform moments of sums of i.i.d. zeta variables.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from fractions import Fraction

import mpmath as mp


def enumerate_graphs(m: int, delta, t: int):
    """Exact law of the degree vector of ``G(t)`` under constant weights ``m``.

    Returns ``{degree tuple: probability}``; every endpoint sequence of every
    step is enumerated with frozen degrees, as the model prescribes.
    """
    delta = Fraction(delta)
    law = {(m, m): Fraction(1)}
    for s in range(2, t + 1):
        nxt = defaultdict(Fraction)
        for deg, pr in law.items():
            total = sum(deg) + s * delta  # 2 L_{s-1} + s delta
            probs = [(d + delta) / total for d in deg]
            for seq in itertools.product(range(s), repeat=m):
                q = pr
                new = list(deg)
                for i in seq:
                    q *= probs[i]
                    new[i] += 1
                new.append(m)
                nxt[tuple(new)] += q
        law = dict(nxt)
    return law


def expected_counts(m: int, delta, t: int) -> dict:
    """``E[N_k(t)]`` as exact fractions."""
    out = defaultdict(Fraction)
    for deg, pr in enumerate_graphs(m, delta, t).items():
        for d in deg:
            out[d] += pr
    return dict(out)


mp.mp.dps = 20


def zeta_pmf(tau, k, kmin=1):
    return mp.mpf(k) ** (-tau) / mp.zeta(tau, kmin)


def zeta_ccdf(tau, x, kmin=1):
    """``P(W > x)`` for integer ``x >= kmin - 1``."""
    return mp.zeta(tau, x + 1) / mp.zeta(tau, kmin)


def zeta_mean_partial(tau, kmin=1, n=10**5):
    """Mean by a partial sum plus the Euler-Maclaurin tail of ``k**(1 - tau)``."""
    s = mp.fsum(mp.mpf(k) ** (1 - tau) for k in range(kmin, n))
    # sum_{k >= n} f(k) ~ int_n^inf f + f(n)/2 - f'(n)/12
    f = lambda x: x ** (1 - tau)
    tail = mp.mpf(n) ** (2 - tau) / (tau - 2) + f(mp.mpf(n)) / 2 + (tau - 1) * mp.mpf(n) ** (-tau) / 12
    return (s + tail) / mp.zeta(tau, kmin)


def laplace(tau):
    """``phi(lam) = E[exp(-lam W)]`` for ``W ~ zeta(tau)`` on ``k >= 1``, non-integer tau.

    ``Li_tau(e^-lam) = Gamma(1 - tau) lam^(tau - 1) + sum_n zeta(tau - n) (-lam)^n / n!``
    for ``lam < 2 pi``; a direct sum is used for ``lam >= 1``.
    """
    z = mp.zeta(tau)
    g = mp.gamma(1 - tau)
    coef = [mp.zeta(tau - n) / mp.factorial(n) for n in range(60)]

    def phi(lam):
        if lam >= 1:
            return mp.fsum(mp.mpf(k) ** (-tau) * mp.exp(-lam * k) for k in range(1, 80)) / z
        return (g * lam ** (tau - 1) + mp.polyval(coef[::-1], -lam)) / z

    return phi


def _quad_power(f, p):
    """``int_0^inf f(lam) dlam`` after ``lam = u**p``, which flattens power singularities at 0."""
    g = lambda u: f(u**p) * p * u ** (p - 1)
    pts = [0] + [mp.mpf(10) ** (j / p) for j in range(-40, 4, 4)] + [mp.inf]
    return mp.quad(g, pts)


def sum_moment(tau, s, t):
    """``E[L_t^s]`` for ``0 < s < tau - 1 < 1``, ``L_t`` a sum of ``t`` i.i.d. zeta(tau) variables.

    Uses ``E[X^s] = s / Gamma(1 - s) * int_0^inf (1 - phi(lam)^t) lam^(-s-1) dlam``.
    """
    phi = laplace(tau)
    f = lambda lam: (1 - phi(lam) ** t) * lam ** (-s - 1)
    return s / mp.gamma(1 - s) * _quad_power(f, 1 / (tau - 1 - s))


def sum_neg_moment(tau, s, t):
    """``E[L_t^-s] = 1/Gamma(s) int_0^inf lam^(s-1) phi(lam)^t dlam``."""
    phi = laplace(tau)
    f = lambda lam: lam ** (s - 1) * phi(lam) ** t
    return _quad_power(f, 1 / s) / mp.gamma(s)
