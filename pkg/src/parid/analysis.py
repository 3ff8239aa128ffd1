"""Statistics on simulated degree sequences.

Covers the quantities needed to check the limit theorems at desk scale:
replication aggregates, sup-norm deviation from the limit law and its
decay rate, Hill tail-index estimates, the weight-ccdf lower bound on
``p_{>=k}(t)``, fractional degree moments for infinite-mean weights, the
norming-sequence moments of ``L_t`` and the growth of the miscoupling count.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import chi2

from . import engine
from . import rng as rngmod
from .stats import EmpiricalStats
from .theory import TheoreticalDegreeDistribution
from .weights import WeightDistribution

__all__ = [
    "EmpiricalStats", "ReplicationAggregate", "aggregate", "sup_norm_deviation",
    "decay_exponent", "loglog_slope", "hill_estimator", "hill_from_stats",
    "ccdf_lower_bound_check", "fractional_moment_scaling", "moment_report", "norming_moment_check",
    "coupling_growth", "compare_counts",
]


@dataclass(frozen=True)
class ReplicationAggregate:
    """Per-degree mean and variance of ``p_k(t)`` across replications."""

    t: int
    ks: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    reps: int
    count_mean: np.ndarray = field(repr=False)
    count_var: np.ndarray = field(repr=False)

    def stderr(self) -> np.ndarray:
        return np.sqrt(self.var / self.reps)

    def at(self, k):
        """``(mean p_k, stderr)`` for degree ``k`` (zeros when never seen)."""
        idx = np.searchsorted(self.ks, k)
        if idx < len(self.ks) and self.ks[idx] == k:
            return float(self.mean[idx]), float(self.stderr()[idx])
        return 0.0, 0.0

    def to_csv(self) -> str:
        lines = ["k,mean_p_k,var_p_k"]
        for k, m, v in zip(self.ks, self.mean, self.var):
            lines.append(f"{int(k)},{float(m)!r},{float(v)!r}")
        return "\n".join(lines) + "\n"


def aggregate(snapshots: list[EmpiricalStats]) -> ReplicationAggregate:
    """Combine one snapshot per replication (all at the same ``t``)."""
    if not snapshots:
        raise ValueError("nothing to aggregate")
    t = snapshots[0].t
    if any(s.t != t for s in snapshots):
        raise ValueError("snapshots are taken at different times")
    ks = np.unique(np.concatenate([s.ks for s in snapshots]))
    counts = np.zeros((len(snapshots), len(ks)))
    for r, s in enumerate(snapshots):
        counts[r, np.searchsorted(ks, s.ks)] = s.counts
    n = len(snapshots)
    ddof = 1 if n > 1 else 0
    cmean = counts.mean(axis=0)
    cvar = counts.var(axis=0, ddof=ddof)
    return ReplicationAggregate(t, ks, cmean / (t + 1), cvar / (t + 1) ** 2, n, cmean, cvar)


def sup_norm_deviation(emp: EmpiricalStats, theory: TheoreticalDegreeDistribution) -> float:
    """``max_k |p_k(t) - p_k|``.

    Degrees beyond ``theory.k_max`` contribute ``max(p_k(t), tail_mass)``,
    an upper bound on their deviation since every such ``p_k <= tail_mass``.
    """
    p_emp = emp.p_k
    inside = emp.ks <= theory.k_max
    dense = np.zeros(theory.k_max)
    ks_in = emp.ks[inside]
    ks_pos = ks_in >= 1
    dense[ks_in[ks_pos] - 1] = p_emp[inside][ks_pos]
    dev = float(np.max(np.abs(dense - theory.p))) if theory.k_max else 0.0
    # degree-0 vertices cannot occur, but count them honestly if present
    if np.any(emp.ks < 1):
        dev = max(dev, float(p_emp[emp.ks < 1].sum()))
    if np.any(~inside):
        dev = max(dev, float(np.max(p_emp[~inside])), theory.tail_mass)
    elif theory.tail_mass > 0:
        dev = max(dev, theory.tail_mass)
    return dev


def loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def decay_exponent(sup_norms) -> float:
    """Negative log-log slope of ``(t, value)`` pairs; zero values are dropped."""
    pts = [(float(t), float(v)) for t, v in sup_norms if v > 0]
    if len({t for t, _ in pts}) < 2:
        raise ValueError("need at least two positive sup-norm values at distinct times")
    t, v = zip(*pts)
    return -loglog_slope(t, v)


def hill_estimator(degrees, top_k: int) -> float:
    """Tail exponent ``tau`` of ``P(D = k) ~ k**-tau`` from the top ``top_k`` order statistics.

    ``1 + 1 / mean(log(X_(i) / X_(top_k + 1)))``; ``inf`` when the log
    spacings are all zero.
    """
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    x = np.sort(np.asarray(degrees, dtype=float))[::-1]
    if top_k + 1 > len(x):
        raise ValueError(f"top_k={top_k} needs at least {top_k + 1} values, got {len(x)}")
    if x[top_k] < 1:
        raise ValueError("Hill estimator needs values >= 1")
    h = float(np.mean(np.log(x[:top_k] / x[top_k])))
    if h <= 0:
        return math.inf
    return 1.0 + 1.0 / h


def hill_from_stats(emp: EmpiricalStats, fraction: float = 0.01) -> float:
    top_k = max(1, int(round(fraction * emp.n_vertices)))
    return hill_estimator(emp.top_degrees(top_k + 1), top_k)


# ---------------------------------------------------------------------------


@dataclass
class CcdfBoundReport:
    t: int
    ks: np.ndarray
    observed: np.ndarray  # p_{>=k}(t)
    bound: np.ndarray  # P(W >= k) t / (t + 1)
    slack: np.ndarray
    violation: np.ndarray  # max(0, bound - slack - observed)

    @property
    def max_violation(self) -> float:
        return float(self.violation.max()) if len(self.violation) else 0.0

    @property
    def n_violations(self) -> int:
        return int(np.count_nonzero(self.violation > 0))

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def summary(self) -> dict:
        return {"t": self.t, "ks_checked": int(len(self.ks)), "max_violation": self.max_violation,
                "violations": self.n_violations, "passed": self.passed}


def ccdf_lower_bound_check(emp: EmpiricalStats, weights: WeightDistribution,
                           nsigma: float = 3.0, ks=None) -> CcdfBoundReport:
    """Check ``p_{>=k}(t) >= P(W >= k) t/(t+1)`` up to ``nsigma`` binomial sds.

    By default ``k`` runs over 1 and every observed degree plus one, which are
    the left ends of the intervals on which ``p_{>=k}(t)`` is constant; the
    right side is non-increasing in ``k`` so those points are the binding ones.
    """
    t = emp.t
    if ks is None:
        ks = np.unique(np.concatenate([[1], emp.ks + 1]))
    ks = np.asarray(ks, dtype=np.int64)
    q = np.asarray(weights.ccdf(ks - 1), dtype=float)
    bound = q * t / (t + 1)
    slack = nsigma * np.sqrt(t * q * (1 - q)) / (t + 1)
    observed = np.asarray(emp.p_geq(ks), dtype=float)
    violation = np.maximum(0.0, bound - slack - observed)
    return CcdfBoundReport(t, ks, observed, bound, slack, violation)


# ---------------------------------------------------------------------------


@dataclass
class FractionalMomentReport:
    s: float
    t: int
    probes: np.ndarray
    mean: np.ndarray  # mean of d_i(t)**s over reps
    stderr: np.ndarray
    reps: int
    slope: float  # log mean vs log i
    envelope_slope: float  # -s / (tau_w - 1)

    def to_csv(self) -> str:
        lines = ["i,mean_d_s,stderr"]
        for i, m, e in zip(self.probes, self.mean, self.stderr):
            lines.append(f"{int(i)},{float(m)!r},{float(e)!r}")
        return "\n".join(lines) + "\n"


def _final_degrees(args):
    params, rep, probes = args
    state, _ = engine.run(params, (), rep)
    return state.degree_sequence[probes].astype(float)


def fractional_moment_scaling(params: engine.ModelParams, s: float, probe_vertices,
                              reps: int, *, workers: int = 1) -> FractionalMomentReport:
    """Monte-Carlo ``E[d_i(t_max)**s]`` for each probe vertex ``i``.

    Each replication is a fresh run; all probes are read off the same run.
    The fitted log-log slope against ``i`` is reported next to the
    ``-s/(tau_w - 1)`` envelope exponent of the degree-moment bound.
    """
    tau_w = params.weights.tau_w
    if not 1 < tau_w < 2:
        raise ValueError(f"fractional moments need tau_w in (1, 2), got {tau_w}")
    if not s < tau_w - 1:
        raise ValueError(f"need s < tau_w - 1 = {tau_w - 1}, got s={s}")
    probes = np.asarray(probe_vertices, dtype=np.int64)
    if np.any(probes < 0) or np.any(probes > params.t_max):
        raise ValueError("probe vertices must lie in [0, t_max]")
    jobs = [(params, r, probes) for r in range(reps)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_final_degrees, jobs))
    else:
        rows = [_final_degrees(j) for j in jobs]
    return moment_report(np.array(rows), probes, s, tau_w, params.t_max)


def moment_report(degrees, probes, s: float, tau_w: float, t: int) -> FractionalMomentReport:
    """Summarise ``degrees[r, j] = d_{probes[j]}(t)`` of replication ``r``."""
    probes = np.asarray(probes, dtype=np.int64)
    powered = np.asarray(degrees, dtype=float) ** s
    reps = powered.shape[0]
    mean = powered.mean(axis=0)
    stderr = powered.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.zeros_like(mean)
    pos = probes >= 1
    slope = loglog_slope(probes[pos], mean[pos]) if pos.sum() >= 2 else math.nan
    return FractionalMomentReport(s, t, probes, mean, stderr, reps, slope, -s / (tau_w - 1))


@dataclass
class NormingReport:
    s: float
    t_values: list
    reps: int
    a_t: list
    mean_pos: list  # E[L_t**s]
    mean_neg: list  # E[L_t**-s]
    ratio_pos: list  # E[L_t**s] / a_t**s
    product_neg: list  # E[L_t**-s] * a_t**s
    spread_limit: float = 2.0
    bound_limit: float = 10.0

    @property
    def ratio_spread(self) -> float:
        return max(self.ratio_pos) / min(self.ratio_pos)

    @property
    def passed(self) -> bool:
        return self.ratio_spread < self.spread_limit and max(self.product_neg) <= self.bound_limit

    def summary(self) -> dict:
        d = asdict(self)
        d.update(ratio_spread=self.ratio_spread, passed=self.passed)
        return d


def norming_moment_check(weights: WeightDistribution, s: float, t_values, reps: int,
                         seed: int = 0) -> NormingReport:
    """Monte-Carlo moments of ``L_t`` against the norming sequence ``a_t``.

    Replication ``r`` draws its weights from the same stream an engine run of
    replication ``r`` would use, so ``L_t`` matches that run exactly.
    """
    tau_w = weights.tau_w
    if not 1 < tau_w < 2:
        raise ValueError(f"norming moments need tau_w in (1, 2), got {tau_w}")
    if not 0 < s < tau_w - 1:
        raise ValueError(f"need 0 < s < tau_w - 1 = {tau_w - 1}, got s={s}")
    t_values = sorted(int(t) for t in t_values)
    idx = np.array(t_values) - 1
    pos = np.zeros(len(t_values))
    neg = np.zeros(len(t_values))
    for r in range(reps):
        gen = rngmod.stream(seed, r, rngmod.WEIGHTS)
        L = np.cumsum(weights.sample_float(gen, t_values[-1]))[idx]
        pos += L**s
        neg += L ** (-s)
    pos /= reps
    neg /= reps
    a = [float(weights.norming_quantile(t).value) for t in t_values]
    return NormingReport(
        s=s, t_values=t_values, reps=reps, a_t=a, mean_pos=pos.tolist(), mean_neg=neg.tolist(),
        ratio_pos=[p / ai**s if ai > 0 else math.inf for p, ai in zip(pos, a)],
        product_neg=[n * ai**s for n, ai in zip(neg, a)],
    )


# ---------------------------------------------------------------------------


@dataclass
class CouplingGrowthReport:
    a: float
    t_values: list
    reps: int
    mean_U: list
    stderr_U: list
    slope: float

    @property
    def passed(self) -> bool:
        return self.slope < 1.0

    def summary(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_csv(self) -> str:
        rows = [f"{t},{float(m)!r},{float(e)!r}" for t, m, e in
                zip(self.t_values, self.mean_U, self.stderr_U)]
        return "t,mean_U,stderr\n" + "\n".join(rows) + "\n"


def coupling_growth(params: engine.ModelParams, a: float, t_values, reps: int) -> CouplingGrowthReport:
    """``E[U_t]`` from coupled runs with horizon ``t`` for each ``t`` and its log-log slope.

    The truncation level ``t**a`` moves with the horizon, as in the bound
    ``E[U_t] <= K t**b``.
    """
    from dataclasses import replace

    t_values = sorted(int(t) for t in t_values)
    means, errs = [], []
    for t in t_values:
        p = replace(params, t_max=t)
        u = np.array([engine.coupled_run(p, a, rep=r).U(t) for r in range(reps)], float)
        means.append(float(u.mean()))
        errs.append(float(u.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0)
    return CouplingGrowthReport(a, t_values, reps, means, errs, loglog_slope(t_values, means))


@dataclass
class CountComparison:
    ks: np.ndarray
    z: np.ndarray
    nsigma: float

    @property
    def worst(self) -> float:
        return float(np.max(np.abs(self.z))) if len(self.z) else 0.0

    @property
    def chi2_pvalue(self) -> float:
        """Global test of all compared bins at once (``sum z^2`` against chi-square)."""
        if not len(self.z):
            return 1.0
        return float(chi2.sf(float(np.sum(self.z**2)), len(self.z)))

    @property
    def passed(self) -> bool:
        return self.worst <= self.nsigma


def compare_counts(a: ReplicationAggregate, b: ReplicationAggregate, min_count: float = 100,
                   nsigma: float = 3.0, *, pooled: bool = False) -> CountComparison:
    """Two-sample z-scores of mean ``N_k(t)``.

    Degree ``k`` is compared when its histogram count ``E[N_k(t)]`` reaches
    ``min_count`` in both samples, or with ``pooled=True`` when its count
    summed over all replications does.
    """
    ks = np.intersect1d(a.ks, b.ks)
    ia = np.searchsorted(a.ks, ks)
    ib = np.searchsorted(b.ks, ks)
    size_a = a.count_mean[ia] * (a.reps if pooled else 1)
    size_b = b.count_mean[ib] * (b.reps if pooled else 1)
    keep = (size_a >= min_count) & (size_b >= min_count)
    ks, ia, ib = ks[keep], ia[keep], ib[keep]
    se = np.sqrt(a.count_var[ia] / a.reps + b.count_var[ib] / b.reps)
    diff = a.count_mean[ia] - b.count_mean[ib]
    z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.inf))
    return CountComparison(ks, z, nsigma)
