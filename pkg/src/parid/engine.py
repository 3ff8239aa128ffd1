"""Exact simulation of the PARID graph process.

``G(1)`` is two vertices ``v_0, v_1`` joined by ``W_1`` parallel edges.  At
step ``t`` vertex ``v_t`` arrives with ``W_t`` edges whose endpoints are
drawn i.i.d. (with replacement) from ``v_0..v_{t-1}``, vertex ``i`` being
chosen with probability ``(d_i(t-1) + delta) / (2 L_{t-1} + t delta)``.
Degrees stay frozen at their ``t-1`` values for all draws of a step and
are committed afterwards (``sequential_update=True`` switches to updating
after every single edge).

The fitness rule replaces ``d_i + delta`` by ``eta_i d_i + zeta_i``; both
rules run through the same kernel, PARID being ``eta = 1, zeta = delta``.

Attachment weights live in a Fenwick tree of float64 values.  The tree is
rebuilt from the exact integer degrees every ``REBUILD_EVERY`` point
updates, or as soon as its total drifts from ``2 L + n delta`` by more than
``DRIFT_TOL`` relative.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng as rngmod
from .fenwick import capacity_for, fw_add, fw_build, fw_find, fw_multinomial
from .stats import EmpiricalStats
from .weights import WeightDistribution

REBUILD_EVERY = 2**20
DRIFT_TOL = 1e-6
_L_LIMIT = 2**62


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class FitnessLaw:
    """Non-negative real law for the fitness rule.

    ``const:v=1``, ``uniform:lo=0,hi=1`` or ``exp:scale=1``.
    """

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind == "const":
            ok = self.a >= 0
        elif self.kind == "uniform":
            ok = 0 <= self.a <= self.b
        elif self.kind == "exp":
            ok = self.a > 0
        else:
            raise ConfigurationError(f"unknown fitness law {self.kind!r}")
        if not ok:
            raise ConfigurationError(f"fitness law {self.spec} is not a non-negative law")

    @property
    def can_be_positive(self) -> bool:
        return self.kind == "exp" or (self.kind == "const" and self.a > 0) or (
            self.kind == "uniform" and self.b > 0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "const":
            return np.full(n, float(self.a))
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, n)
        return rng.exponential(self.a, n)

    @property
    def spec(self) -> str:
        if self.kind == "const":
            return f"const:v={self.a!r}"
        if self.kind == "uniform":
            return f"uniform:lo={self.a!r},hi={self.b!r}"
        return f"exp:scale={self.a!r}"


def parse_fitness(text: str) -> FitnessLaw:
    kind, _, rest = text.strip().partition(":")
    opts = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, _, value = item.partition("=")
        opts[key.strip().lower()] = float(value)
    kind = kind.strip().lower()
    try:
        if kind == "const":
            return FitnessLaw("const", opts["v"])
        if kind == "uniform":
            return FitnessLaw("uniform", opts["lo"], opts["hi"])
        if kind == "exp":
            return FitnessLaw("exp", opts["scale"])
    except KeyError as exc:
        raise ConfigurationError(f"fitness spec {text!r} is missing {exc.args[0]!r}") from None
    raise ConfigurationError(f"unknown fitness law {kind!r}")


@dataclass(frozen=True)
class Fitness:
    eta: FitnessLaw
    zeta: FitnessLaw

    def __post_init__(self):
        if not (self.eta.can_be_positive or self.zeta.can_be_positive):
            raise ConfigurationError("fitness laws give every vertex zero attachment weight")


@dataclass(frozen=True)
class ModelParams:
    delta: float
    weights: WeightDistribution
    t_max: int
    seed: int = 0
    rule: Fitness | None = None
    sequential_update: bool = False

    def __post_init__(self):
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise ConfigurationError(f"t_max must be a positive integer, got {self.t_max}")
        object.__setattr__(self, "t_max", int(self.t_max))
        object.__setattr__(self, "delta", float(self.delta))
        rngmod.check_seed(self.seed)
        if self.rule is None and not self.delta + self.weights.min_support > 0:
            raise ConfigurationError(
                f"delta + min support must be > 0 for attachment probabilities to be "
                f"well defined (delta={self.delta}, min support={self.weights.min_support})")

    @property
    def is_parid(self) -> bool:
        return self.rule is None


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _rebuild(tree, deg, eta, zeta, n):
    vals = np.empty(n)
    s = 0.0
    for i in range(n):
        vals[i] = eta[i] * deg[i] + zeta[i]
        s += vals[i]
    fw_build(tree, vals, n)
    return s


@njit(cache=True)
def _init_state(deg, w, eta, zeta, tree, meta, metaf, parid, delta):
    deg[:] = 0
    deg[0] = w[1]
    deg[1] = w[1]
    s = _rebuild(tree, deg, eta, zeta, 2)
    meta[0] = w[1]
    meta[2] = 0
    meta[3] = 0
    if parid:
        metaf[0] = 2.0 * w[1] + 2.0 * delta
    else:
        metaf[0] = s


@njit(cache=True)
def _advance(deg, w, eta, zeta, tree, t_from, t_to, rng, sequential, parid, delta,
             hits, hidx, hcnt, edges, meta, metaf):
    """Evolve from ``G(t_from)`` to ``G(t_to)`` in place.

    ``meta = [L, edge_pos, updates, rebuilds, record_edges]``,
    ``metaf = [expected_total]``.
    """
    cap = tree.shape[0] - 1
    L = meta[0]
    epos = meta[1]
    updates = meta[2]
    record = meta[4] != 0
    expected = metaf[0]
    for t in range(t_from + 1, t_to + 1):
        W = w[t]
        if L > _L_LIMIT - W:
            raise OverflowError("total weight L_t exceeds the int64 range")
        total = tree[cap]
        if not total > 0.0:
            raise ValueError("total attachment weight is not positive")
        gained = 0.0
        if sequential:
            for _ in range(W):
                i = fw_find(tree, rng.random() * tree[cap])
                if i >= t:
                    i = t - 1
                deg[i] += 1
                fw_add(tree, i, eta[i])
                gained += eta[i]
                if record:
                    edges[epos, 0] = t
                    edges[epos, 1] = i
                    epos += 1
            updates += W
        elif W >= t:
            h = fw_multinomial(tree, W, rng, hidx, hcnt)
            for j in range(h):
                i = hidx[j]
                if i >= t:
                    i = t - 1
                c = hcnt[j]
                deg[i] += c
                fw_add(tree, i, eta[i] * c)
                gained += eta[i] * c
                if record:
                    for _ in range(c):
                        edges[epos, 0] = t
                        edges[epos, 1] = i
                        epos += 1
            updates += h
        else:
            for l in range(W):
                i = fw_find(tree, rng.random() * total)
                if i >= t:
                    i = t - 1
                hits[l] = i
            for l in range(W):
                i = hits[l]
                deg[i] += 1
                fw_add(tree, i, eta[i])
                gained += eta[i]
                if record:
                    edges[epos, 0] = t
                    edges[epos, 1] = i
                    epos += 1
            updates += W
        deg[t] = W
        fw_add(tree, t, eta[t] * W + zeta[t])
        updates += 1
        L += W
        if parid:
            expected = 2.0 * L + (t + 1) * delta
        else:
            expected += gained + eta[t] * W + zeta[t]
        if updates >= REBUILD_EVERY or abs(tree[cap] - expected) > DRIFT_TOL * abs(expected):
            s = _rebuild(tree, deg, eta, zeta, t + 1)
            if not parid:
                expected = s
            updates = 0
            meta[3] += 1
    meta[0] = L
    meta[1] = epos
    meta[2] = updates
    metaf[0] = expected


@njit(cache=True)
def _draw_frozen(tree, n_active, rng, size, out):
    total = tree[tree.shape[0] - 1]
    for j in range(size):
        i = fw_find(tree, rng.random() * total)
        if i >= n_active:
            i = n_active - 1
        out[j] = i


# ---------------------------------------------------------------------------
# state


@dataclass
class GraphState:
    """``G(t)`` plus the sampler and pre-drawn per-vertex randomness.

    ``weights[i]`` is ``W_i`` for ``i >= 1`` (``weights[0]`` is an unused 0);
    the whole sequence ``W_1..W_{t_max}`` is drawn from the weight stream at
    :func:`init`.
    """

    params: ModelParams
    t: int
    degrees: np.ndarray
    weights: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    tree: np.ndarray
    rng: np.random.Generator
    edges: np.ndarray
    meta: np.ndarray = field(repr=False)
    metaf: np.ndarray = field(repr=False)
    _hits: np.ndarray = field(repr=False)
    _hidx: np.ndarray = field(repr=False)
    _hcnt: np.ndarray = field(repr=False)

    @property
    def L_t(self) -> int:
        return int(self.meta[0])

    @property
    def n_vertices(self) -> int:
        return self.t + 1

    @property
    def degree_sequence(self) -> np.ndarray:
        return self.degrees[:self.t + 1]

    @property
    def initial_weights(self) -> np.ndarray:
        return self.weights[1:self.t + 1]

    @property
    def sampler_total(self) -> float:
        return float(self.tree[-1])

    @property
    def rebuilds(self) -> int:
        return int(self.meta[3])

    @property
    def edge_log(self) -> np.ndarray | None:
        if not self.meta[4]:
            return None
        return self.edges[:self.meta[1]]

    def stats(self) -> EmpiricalStats:
        return EmpiricalStats.from_degrees(self.degree_sequence, self.t, self.L_t)

    def advance(self, t_to: int) -> "GraphState":
        if not self.t <= t_to <= self.params.t_max:
            raise ValueError(f"cannot advance from t={self.t} to t={t_to} (t_max={self.params.t_max})")
        p = self.params
        _advance(self.degrees, self.weights, self.eta, self.zeta, self.tree, self.t, t_to,
                 self.rng, p.sequential_update, p.is_parid, p.delta, self._hits, self._hidx,
                 self._hcnt, self.edges, self.meta, self.metaf)
        self.t = t_to
        return self


def _fitness_arrays(params: ModelParams, streams: rngmod.Streams):
    n = params.t_max + 1
    if params.is_parid:
        return np.ones(n), np.full(n, params.delta)
    eta = params.rule.eta.sample(streams.fitness, n)
    zeta = params.rule.zeta.sample(streams.fitness, n)
    return eta, zeta


def init(params: ModelParams, streams: rngmod.Streams | None = None, *,
         record_edges: bool = False) -> GraphState:
    """``G(1)`` for replication stream ``streams`` (default: rep 0)."""
    if streams is None:
        streams = rngmod.streams(params.seed, 0)
    n = params.t_max + 1
    w = np.zeros(n, np.int64)
    w[1:] = params.weights.sample(streams.weights, params.t_max)
    eta, zeta = _fitness_arrays(params, streams)
    cap = capacity_for(n)
    tree = np.zeros(cap + 1)
    deg = np.zeros(n, np.int64)
    meta = np.zeros(5, np.int64)
    metaf = np.zeros(1)
    if record_edges:
        edges = np.zeros((int(w.sum()), 2), np.int64)
        edges[:w[1], 0] = 1
        meta[1] = w[1]
        meta[4] = 1
    else:
        edges = np.zeros((0, 2), np.int64)
    _init_state(deg, w, eta, zeta, tree, meta, metaf, params.is_parid, params.delta)
    return GraphState(
        params=params, t=1, degrees=deg, weights=w, eta=eta, zeta=zeta, tree=tree,
        rng=streams.endpoints, edges=edges, meta=meta, metaf=metaf,
        _hits=np.zeros(n, np.int64), _hidx=np.zeros(cap, np.int64), _hcnt=np.zeros(cap, np.int64),
    )


def step(state: GraphState) -> GraphState:
    """Add one vertex (the rule is taken from ``state.params``)."""
    return state.advance(state.t + 1)


def fitness_step(state: GraphState) -> GraphState:
    if state.params.is_parid:
        raise ConfigurationError("fitness_step requires a Fitness rule")
    return state.advance(state.t + 1)


def attachment_probabilities(state: GraphState) -> np.ndarray:
    """Exact endpoint law for the next edge, from the integer degrees."""
    n = state.t + 1
    w = state.eta[:n] * state.degrees[:n] + state.zeta[:n]
    return w / w.sum()


def draw_endpoints(state: GraphState, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` endpoint draws from the frozen state; nothing is committed."""
    out = np.empty(size, np.int64)
    _draw_frozen(state.tree, state.t + 1, rng, size, out)
    return out


def _check_snapshots(times, t_max):
    times = [int(t) for t in times]
    if times != sorted(times) or len(set(times)) != len(times):
        raise ValueError("snapshot times must be strictly increasing")
    if times and not (1 <= times[0] and times[-1] <= t_max):
        raise ValueError(f"snapshot times must lie in [1, {t_max}]")
    return times


def run(params: ModelParams, snapshot_times=(), rep: int = 0, *, record_edges: bool = False):
    """Evolve replication ``rep`` to ``t_max``; returns ``(state, snapshots)``."""
    times = _check_snapshots(snapshot_times, params.t_max)
    state = init(params, rngmod.streams(params.seed, rep), record_edges=record_edges)
    snaps = []
    for t in times:
        state.advance(t)
        snaps.append(state.stats())
    state.advance(params.t_max)
    return state, snaps


def _run_snapshots(args):
    params, times, rep = args
    return run(params, times, rep)[1]


def run_replications(params: ModelParams, reps: int, snapshot_times, *, workers: int = 1,
                     first_rep: int = 0) -> list[list[EmpiricalStats]]:
    """Snapshots of replications ``first_rep .. first_rep + reps - 1``, in rep order."""
    times = _check_snapshots(snapshot_times, params.t_max)
    jobs = [(params, times, r) for r in range(first_rep, first_rep + reps)]
    if workers <= 1 or reps <= 1:
        return [_run_snapshots(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_snapshots, jobs))


# ---------------------------------------------------------------------------
# many small replications in one kernel call

BATCH_WEIGHTS = 3
BATCH_ENDPOINTS = 4


@njit(cache=True)
def _batch_counts(wmat, delta, times, k_max, rng, out_sum, out_sq):
    R = wmat.shape[0]
    n = wmat.shape[1]
    cap = 1
    while cap < n:
        cap *= 2
    tree = np.zeros(cap + 1)
    deg = np.zeros(n, np.int64)
    eta = np.ones(n)
    zeta = np.full(n, delta)
    hits = np.zeros(n, np.int64)
    hidx = np.zeros(cap, np.int64)
    hcnt = np.zeros(cap, np.int64)
    edges = np.zeros((0, 2), np.int64)
    meta = np.zeros(5, np.int64)
    metaf = np.zeros(1)
    counts = np.zeros(k_max + 2)
    for r in range(R):
        w = wmat[r]
        _init_state(deg, w, eta, zeta, tree, meta, metaf, True, delta)
        tcur = 1
        for j in range(times.shape[0]):
            _advance(deg, w, eta, zeta, tree, tcur, times[j], rng, False, True, delta,
                     hits, hidx, hcnt, edges, meta, metaf)
            tcur = times[j]
            counts[:] = 0.0
            for i in range(tcur + 1):
                counts[min(deg[i], k_max + 1)] += 1.0
            for k in range(k_max + 2):
                out_sum[j, k] += counts[k]
                out_sq[j, k] += counts[k] * counts[k]


def monte_carlo_counts(params: ModelParams, reps: int, snapshot_times, k_max: int,
                       chunk: int = 100_000):
    """Mean and variance of ``N_k(t)`` over ``reps`` independent PARID runs.

    All replications run inside one kernel call and share a single batch
    stream (``spawn_key=(chunk, 3|4)``), so individual runs are not
    replayable; use :func:`run` for that.  Degrees above ``k_max`` land in
    column ``k_max + 1``.  Returns ``(mean, var)`` with shape
    ``(len(times), k_max + 2)``.
    """
    if not params.is_parid or params.sequential_update:
        raise ConfigurationError("batch counts support the default PARID rule only")
    times = np.array(_check_snapshots(snapshot_times, params.t_max), np.int64)
    out_sum = np.zeros((len(times), k_max + 2))
    out_sq = np.zeros_like(out_sum)
    gen_e = rngmod.stream(params.seed, 0, BATCH_ENDPOINTS)
    done = 0
    c = 0
    while done < reps:
        m = min(chunk, reps - done)
        gen_w = rngmod.stream(params.seed, c, BATCH_WEIGHTS)
        wmat = np.zeros((m, params.t_max + 1), np.int64)
        wmat[:, 1:] = params.weights.sample(gen_w, m * params.t_max).reshape(m, params.t_max)
        _batch_counts(wmat, params.delta, times, k_max, gen_e, out_sum, out_sq)
        done += m
        c += 1
    mean = out_sum / reps
    var = np.maximum(out_sq / reps - mean**2, 0.0) * reps / max(reps - 1, 1)
    return mean, var


# ---------------------------------------------------------------------------
# truncation coupling


@njit(cache=True)
def _search(cum, n, u):
    i = np.searchsorted(cum[:n], u, side="right")
    if i >= n:
        i = n - 1
    return i


@njit(cache=True)
def _coupled(w, wp, delta, rng, deg, degp, u_traj):
    n = w.shape[0]
    cm = np.zeros(n)
    cr = np.zeros(n)
    crp = np.zeros(n)
    cp = np.zeros(n)
    hg = np.zeros(n, np.int64)
    hgp = np.zeros(n, np.int64)
    maxw = 0
    for s in range(n):
        if w[s] > maxw:
            maxw = w[s]
    if maxw > n:
        hg = np.zeros(maxw, np.int64)
        hgp = np.zeros(maxw, np.int64)
    deg[:] = 0
    degp[:] = 0
    deg[0] = w[1]
    deg[1] = w[1]
    degp[0] = wp[1]
    degp[1] = wp[1]
    U = 2 * (w[1] - wp[1])
    u_traj[0] = 0
    u_traj[1] = U
    L = w[1]
    Lp = wp[1]
    for s in range(2, n):
        norm = 2.0 * L + s * delta
        normp = 2.0 * Lp + s * delta
        S = 0.0
        R = 0.0
        Rp = 0.0
        P = 0.0
        for i in range(s):
            p = (deg[i] + delta) / norm
            pp = (degp[i] + delta) / normp
            m = min(p, pp)
            S += m
            R += p - m
            Rp += pp - m
            P += p
            cm[i] = S
            cr[i] = R
            crp[i] = Rp
            cp[i] = P
        nh = 0
        nhp = 0
        for l in range(w[s]):
            if l < wp[s]:
                u = rng.random()
                if u < S:
                    i = _search(cm, s, u)
                    hg[nh] = i
                    hgp[nhp] = i
                elif R <= 0.0 or Rp <= 0.0:
                    # p == p' up to rounding: the residual is empty
                    i = _search(cm, s, rng.random() * S)
                    hg[nh] = i
                    hgp[nhp] = i
                else:
                    U += 1
                    hg[nh] = _search(cr, s, rng.random() * R)
                    hgp[nhp] = _search(crp, s, rng.random() * Rp)
                nh += 1
                nhp += 1
            else:
                U += 2
                hg[nh] = _search(cp, s, rng.random() * P)
                nh += 1
        for j in range(nh):
            deg[hg[j]] += 1
        for j in range(nhp):
            degp[hgp[j]] += 1
        deg[s] = w[s]
        degp[s] = wp[s]
        L += w[s]
        Lp += wp[s]
        u_traj[s] = U


@dataclass
class CouplingStats:
    """Outcome of one coupled run of ``G`` and its truncated twin ``G'``."""

    a: float
    level: float
    u_trajectory: np.ndarray
    degrees: np.ndarray
    degrees_truncated: np.ndarray
    weights: np.ndarray

    @property
    def identical(self) -> bool:
        return bool(np.array_equal(self.degrees, self.degrees_truncated))

    def U(self, t):
        return self.u_trajectory[np.asarray(t)]


def truncation_level(t_max: int, a: float) -> float:
    return float(t_max) ** a


def coupled_run(params: ModelParams, a: float, rep: int = 0) -> CouplingStats:
    """Jointly evolve ``G`` and ``G'`` (weights capped at ``t_max**a``).

    Each shared edge is attached to the same vertex in both graphs with
    probability ``sum_i min(p_i, p'_i)``; otherwise the two graphs draw from
    their normalised residuals and ``U`` grows by one.  Edges with numbers
    in ``(W'_s, W_s]`` exist only in ``G`` and add two to ``U``.
    """
    if not 0 < a < 0.5:
        raise ValueError(f"truncation exponent must lie in (0, 1/2), got {a}")
    if not params.is_parid:
        raise ConfigurationError("the coupling is defined for the PARID rule")
    streams = rngmod.streams(params.seed, rep)
    n = params.t_max + 1
    w = np.zeros(n, np.int64)
    w[1:] = params.weights.sample(streams.weights, params.t_max)
    level = truncation_level(params.t_max, a)
    wp = np.minimum(w, math.floor(level))
    wp[0] = 0
    return _coupled_from_weights(params, a, level, w, wp, streams.endpoints)


def _coupled_from_weights(params, a, level, w, wp, gen):
    n = len(w)
    deg = np.zeros(n, np.int64)
    degp = np.zeros(n, np.int64)
    u_traj = np.zeros(n, np.int64)
    _coupled(w, wp, params.delta, gen, deg, degp, u_traj)
    return CouplingStats(a, level, u_traj, deg, degp, w)
