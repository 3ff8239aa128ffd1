import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from parid import rng as rngmod
from parid.weights import MAX_INT_DRAW, Constant, Explicit, ZetaPowerLaw, parse_weights


def gen(seed=1):
    return rngmod.stream(seed, 0, rngmod.WEIGHTS)


# -- pmf / ccdf / mean -------------------------------------------------------

def test_constant_pmf_and_ccdf():
    c = Constant(3)
    assert c.pmf(3) == 1.0
    assert c.pmf(2) == 0.0
    assert c.ccdf(2.5) == 1.0
    assert c.ccdf(3) == 0.0
    assert Constant(2).mean == 2


def test_zeta_pmf_against_mpmath():
    z = ZetaPowerLaw(3, 1)
    expected = 2.0**-3 / float(mp.zeta(3))
    assert z.pmf(2) == pytest.approx(expected, rel=1e-12)
    assert z.pmf(2) == pytest.approx(0.10398, abs=1e-5)
    for tau, k, kmin in [(2.5, 7, 1), (1.5, 100, 3), (4.0, 3, 2)]:
        got = ZetaPowerLaw(tau, kmin).pmf(k)
        assert got == pytest.approx(float(oracles.zeta_pmf(tau, k, kmin)), rel=1e-12)
    assert ZetaPowerLaw(2.5, 3).pmf(2) == 0.0


def test_zeta_ccdf_against_mpmath():
    z = ZetaPowerLaw(3, 1)
    assert z.ccdf(1) == pytest.approx(1 - 1 / float(mp.zeta(3)), rel=1e-12)
    assert z.ccdf(1) == pytest.approx(0.16810, abs=1e-5)
    for x in [1, 5, 99, 10**4]:
        assert ZetaPowerLaw(1.5).ccdf(x) == pytest.approx(float(oracles.zeta_ccdf(1.5, x)), rel=1e-12)
    # non-integer x: P(W > 2.5) = P(W >= 3)
    assert z.ccdf(2.5) == pytest.approx(z.ccdf(2), rel=1e-15)
    assert ZetaPowerLaw(2.5, 4).ccdf(3.9) == 1.0


def test_zeta_mean_partial_sum_oracle():
    assert ZetaPowerLaw(3, 1).mean == pytest.approx(1.36843, abs=5e-6)
    for tau, kmin in [(3.0, 1), (4.0, 1), (2.5, 2)]:
        ref = float(oracles.zeta_mean_partial(tau, kmin, n=20000))
        assert ZetaPowerLaw(tau, kmin).mean == pytest.approx(ref, rel=1e-10)
    assert ZetaPowerLaw(1.5, 1).mean == math.inf
    assert ZetaPowerLaw(2.0, 1).mean == math.inf
    assert not ZetaPowerLaw(1.5).has_finite_mean


def test_zeta4_mean_is_zeta3_over_zeta4():
    assert ZetaPowerLaw(4, 1).mean == pytest.approx(float(mp.zeta(3) / mp.zeta(4)), rel=1e-13)


def test_explicit_basics():
    e = Explicit((1, 2), (0.5, 0.5))
    assert e.mean == 1.5
    assert e.pmf(2) == 0.5 and e.pmf(3) == 0.0
    assert e.ccdf(1) == 0.5 and e.ccdf(0) == 1.0 and e.ccdf(2) == 0.0
    assert e.tau_w == math.inf
    # zero atoms are dropped from the support
    assert Explicit((1, 5, 9), (0.5, 0.5, 0.0)).max_support == 5


@pytest.mark.parametrize("ks,probs", [((2, 1), (0.5, 0.5)), ((1, 2), (0.5, 0.6)), ((0, 1), (0.5, 0.5)),
                                      ((1, 2), (-0.1, 1.1)), ((), ())])
def test_explicit_rejects_bad_tables(ks, probs):
    with pytest.raises(ValueError):
        Explicit(ks, probs)


def test_bad_parameters():
    with pytest.raises(ValueError):
        ZetaPowerLaw(1.0)
    with pytest.raises(ValueError):
        ZetaPowerLaw(2.5, 0)
    with pytest.raises(ValueError):
        Constant(0)


# -- invariants --------------------------------------------------------------

DISTS = [Constant(1), Constant(7), Explicit((1, 2), (0.5, 0.5)), Explicit((1, 10), (0.9, 0.1)),
         ZetaPowerLaw(1.5), ZetaPowerLaw(2.2), ZetaPowerLaw(2.5), ZetaPowerLaw(3, 2), ZetaPowerLaw(4)]


@pytest.mark.parametrize("d", DISTS, ids=str)
def test_pmf_sums_to_one(d):
    K = 10**6
    head = math.fsum(np.asarray(d.pmf(np.arange(1, K + 1)), dtype=float))
    assert head + float(d.ccdf(K)) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("d", DISTS, ids=str)
def test_ccdf_nonincreasing(d):
    assert d.ccdf(0) == 1.0
    x = np.concatenate([np.linspace(0, 50, 501), np.geomspace(50, 1e9, 200)])
    c = np.asarray(d.ccdf(x))
    assert np.all(np.diff(c) <= 0)


@pytest.mark.parametrize("d", DISTS, ids=str)
@pytest.mark.parametrize("n", [1, 2, 10, 37, 10**4, 10**6])
def test_norming_quantile_invariant(d, n):
    q = d.norming_quantile(n)
    assert d.ccdf(q.value) >= 1 / n or q.at_support_max
    if not q.at_support_max:
        assert d.ccdf(q.value + 1) < 1 / n


def test_norming_quantile_examples():
    assert Constant(3).norming_quantile(10).value == 3
    assert Explicit((1, 10), (0.9, 0.1)).norming_quantile(10).value == 10


def test_norming_quantile_brute_force_scan():
    z = ZetaPowerLaw(2.5, 1)
    a = z.norming_quantile(10**4).value
    # scan the ccdf directly for the last x with ccdf(x) >= 1e-4
    xs = np.arange(0, 2000)
    ok = np.asarray(z.ccdf(xs)) >= 1e-4
    assert a == xs[ok].max()
    assert z.ccdf(a) >= 1e-4 > z.ccdf(a + 1)


@pytest.mark.parametrize("tau", [1.5, 2.5, 3.5])
def test_zeta_ccdf_slope(tau):
    x = np.geomspace(1e2, 1e4, 50)
    slope = np.polyfit(np.log(x), np.log(ZetaPowerLaw(tau).ccdf(x)), 1)[0]
    assert abs(slope - (1 - tau)) <= 0.05


# -- sampling ----------------------------------------------------------------

def test_constant_sample():
    assert Constant(5).sample(gen()) == 5
    assert np.all(Constant(5).sample(gen(), 100) == 5)


def test_explicit_sample_mean():
    x = Explicit((1, 2), (0.5, 0.5)).sample(gen(), 10**6)
    assert abs(x.mean() - 1.5) <= 0.0015  # 3 sigma = 3 * 0.5 / 1000


def test_zeta_sample_ccdf_at_10():
    z = ZetaPowerLaw(2.5, 1)
    x = z.sample(gen(), 10**6)
    assert abs((x > 10).mean() - z.ccdf(10)) <= 0.003


def _tv(d, x, k_top):
    ks, counts = np.unique(x, return_counts=True)
    emp = np.zeros(k_top + 2)
    inside = ks <= k_top
    emp[ks[inside]] = counts[inside]
    emp[k_top + 1] = counts[~inside].sum()
    emp /= len(x)
    ref = np.zeros(k_top + 2)
    ref[1:k_top + 1] = d.pmf(np.arange(1, k_top + 1))
    ref[k_top + 1] = d.ccdf(k_top)
    return 0.5 * np.abs(emp - ref).sum()


@pytest.mark.parametrize("d", [Explicit((1, 3, 4), (0.2, 0.3, 0.5)), ZetaPowerLaw(2.5),
                               ZetaPowerLaw(1.5), ZetaPowerLaw(3, 2)], ids=str)
def test_sample_total_variation(d):
    x = d.sample(gen(7), 10**6)
    assert _tv(d, x, 200) <= 0.005


@pytest.mark.parametrize("k", [10**5, 10**6, 10**8])
def test_zeta_tail_beyond_table(k):
    # the table stops near 2**16; larger values come from the rejection sampler
    z = ZetaPowerLaw(1.5)
    x = z.sample_float(gen(3), 4 * 10**6)
    q = float(z.ccdf(k))
    sd = math.sqrt(q * (1 - q) / len(x))
    assert abs((x > k).mean() - q) <= 4 * sd


def test_zeta_tail_pmf_of_rejection_sampler():
    # the exact pmf just above the cutoff, not a rounded continuous tail
    z = ZetaPowerLaw(1.2)
    x = z.sample_float(gen(5), 10**6)
    K = z._cutoff
    for k in (K, K + 1, 2 * K):
        q = float(z.pmf(k))
        assert abs((x == k).mean() - q) <= 4 * math.sqrt(q / len(x)) + 1e-12


def test_sample_is_deterministic():
    z = ZetaPowerLaw(2.5)
    assert np.array_equal(z.sample(gen(11), 1000), z.sample(gen(11), 1000))


def test_overflow_is_reported():
    with pytest.raises(OverflowError):
        ZetaPowerLaw(1.02).sample(gen(), 10**4)
    assert MAX_INT_DRAW == 2**62


# -- parsing -----------------------------------------------------------------

@pytest.mark.parametrize("text,expected", [
    ("const:m=3", Constant(3)),
    ("zeta:tau=2.5,kmin=1", ZetaPowerLaw(2.5, 1)),
    ("zeta:tau=2.5", ZetaPowerLaw(2.5, 1)),
    ("explicit:1=0.5,2=0.5", Explicit((1, 2), (0.5, 0.5))),
    (" CONST : m = 4 ", Constant(4)),
])
def test_parse_weights(text, expected):
    d = parse_weights(text)
    assert d == expected
    assert parse_weights(d.spec) == d


@pytest.mark.parametrize("text", ["const", "const:k=3", "pareto:tau=2", "zeta:kmin=1", "explicit:1"])
def test_parse_weights_errors(text):
    with pytest.raises(ValueError):
        parse_weights(text)


@settings(max_examples=40, deadline=None)
@given(tau=st.floats(1.1, 6.0), kmin=st.integers(1, 20), x=st.floats(0, 1e6))
def test_zeta_ccdf_is_pmf_tail(tau, kmin, x):
    z = ZetaPowerLaw(tau, kmin)
    k = max(int(math.floor(x)), kmin - 1)
    # P(W > k) = P(W = k + 1) + P(W > k + 1)
    assert z.ccdf(k) == pytest.approx(z.pmf(k + 1) + z.ccdf(k + 1), rel=1e-9)
    assert 0.0 <= z.ccdf(x) <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8), st.integers(1, 10**6))
def test_explicit_norming_quantile_property(raw, n):
    probs = np.array(raw) / sum(raw)
    probs[-1] = 1.0 - probs[:-1].sum()
    ks = tuple(range(1, 3 * len(raw) + 1, 3))
    d = Explicit(ks, tuple(probs))
    q = d.norming_quantile(n)
    assert d.ccdf(q.value) >= 1 / n or q.at_support_max
    if not q.at_support_max:
        assert d.ccdf(q.value + 1) < 1 / n
    assert abs(math.fsum(d.pmf(np.arange(1, ks[-1] + 1))) - 1) <= 1e-10
