"""Run an :class:`~parid.config.ExperimentSpec` and write its artifacts.

Layout under ``<out_dir>/<name>/``::

    config.txt             canonical spec text (its sha256 is the config hash)
    manifest.json          hash, seed material, versions, timings, finished reps
    report.json            every analysis result with its pass flag
    histograms/rep00000_t0000001000.csv   k,N_k,p_k,p_geq_k per rep and snapshot
    aggregates/t0000001000.csv            k,mean_p_k,var_p_k across reps
    <analysis>.csv         analysis tables (decay.csv, moments.csv, ...)

Replications that finished before an interruption are listed in the
manifest and reloaded, not recomputed, when the same spec is run again.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analysis, engine, theory
from . import rng as rngmod
from .config import ExperimentSpec
from .stats import EmpiricalStats

DEFAULT_PROBES = (10, 100, 1000)


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [to_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def dump_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def versions() -> dict:
    import numba
    import scipy

    from . import __version__
    return {"parid": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def config_hash(spec: ExperimentSpec) -> str:
    return hashlib.sha256(spec.to_text().encode()).hexdigest()


# ---------------------------------------------------------------------------
# replications


def _rep_job(args):
    params, times, probes, rep = args
    try:
        state, snaps = engine.run(params, times, rep)
        deg = state.degree_sequence[list(probes)].copy() if probes else None
        return rep, snaps, deg
    except Exception as exc:
        raise RuntimeError(f"replication {rep} failed: {exc!r}") from exc


def _hist_name(rep, t):
    return f"rep{rep:05d}_t{t:010d}.csv"


def _load_stats(path, t) -> EmpiricalStats:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ks = data[:, 0].astype(np.int64)
    counts = data[:, 1].astype(np.int64)
    return EmpiricalStats(t, ks, counts, int((ks * counts).sum()) // 2)


@dataclass
class ExperimentResult:
    status: int
    passed: bool
    report: dict
    path: Path


def run_experiment(spec: ExperimentSpec, out_dir=None, *, workers: int | None = None,
                   log=None) -> ExperimentResult:
    """Run every replication and analysis of ``spec``; exit status 0 iff all pass."""
    log = log or (lambda msg: None)
    t0 = time.time()
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    root = Path(out_dir if out_dir is not None else spec.out_dir) / spec.name
    root.mkdir(parents=True, exist_ok=True)
    workers = workers or spec.workers or os.cpu_count() or 1
    params = spec.params
    chash = config_hash(spec)
    write_atomic(root / "config.txt", spec.to_text())

    manifest = {
        "name": spec.name,
        "config_hash": chash,
        "config": spec.to_text(),
        "versions": versions(),
        "master_seed": params.seed,
        "reps": spec.reps,
        "seed_material": [rngmod.seed_material(params.seed, r) for r in range(spec.reps)],
        "started": started,
        "status": "running",
        "completed_reps": [],
    }
    old = root / "manifest.json"
    done = set()
    if old.exists():
        try:
            prev = json.loads(old.read_text())
            if prev.get("config_hash") == chash:
                done = {int(r) for r in prev.get("completed_reps", [])}
        except (ValueError, OSError):
            done = set()

    mom = spec.analysis("moments")
    probes = ()
    if mom is not None:
        probes = tuple(int(p) for p in _as_tuple(mom.get("probes", DEFAULT_PROBES)))
    times = list(spec.snapshots)
    need_runs = bool(times) or bool(probes)

    snaps = {}  # rep -> list[EmpiricalStats]
    probe_deg = {}
    if need_runs:
        hist_dir = root / "histograms"
        for r in sorted(done):
            if r >= spec.reps:
                continue
            try:
                snaps[r] = [_load_stats(hist_dir / _hist_name(r, t), t) for t in times]
                if probes:
                    probe_deg[r] = np.loadtxt(root / "probes" / f"rep{r:05d}.csv", delimiter=",",
                                              skiprows=1, ndmin=2)[:, 1]
            except (OSError, ValueError, IndexError):
                snaps.pop(r, None)
                probe_deg.pop(r, None)
        if snaps:
            log(f"reusing {len(snaps)} completed replications")
        todo = [(params, times, probes, r) for r in range(spec.reps) if r not in snaps]
        manifest["completed_reps"] = sorted(snaps)
        write_atomic(old, dump_json(manifest))

        def record(rep, ss, deg):
            for s in ss:
                write_atomic(hist_dir / _hist_name(rep, s.t), s.to_csv())
            if deg is not None:
                rows = "".join(f"{i},{int(d)}\n" for i, d in zip(probes, deg))
                write_atomic(root / "probes" / f"rep{rep:05d}.csv", "i,d_i\n" + rows)
                probe_deg[rep] = deg
            snaps[rep] = ss
            manifest["completed_reps"] = sorted(snaps)
            write_atomic(old, dump_json(manifest))

        if workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for res in pool.map(_rep_job, todo):
                    record(*res)
        else:
            for job in todo:
                record(*_rep_job(job))
        for i, t in enumerate(times):
            agg = analysis.aggregate([snaps[r][i] for r in range(spec.reps)])
            write_atomic(root / "aggregates" / f"t{t:010d}.csv", agg.to_csv())

    ctx = _Context(spec, root, workers, times,
                   [snaps[r] for r in range(spec.reps)] if times else [],
                   np.array([probe_deg[r] for r in range(spec.reps)]) if probes else None, log)
    results = {}
    for a in spec.analyses:
        log(f"analysis {a.to_text()}")
        results[a.name] = _ANALYSES[a.name](ctx, a)
    passed = all(r["passed"] for r in results.values())
    report = {"name": spec.name, "config_hash": chash, "analyses": results, "passed": passed}
    write_atomic(root / "report.json", dump_json(report))

    manifest.update(status="complete", finished=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                    wall_time_s=time.time() - t0, passed=passed)
    write_atomic(old, dump_json(manifest))
    return ExperimentResult(0 if passed else 1, passed, report, root)


# ---------------------------------------------------------------------------
# analyses


@dataclass
class _Context:
    spec: ExperimentSpec
    root: Path
    workers: int
    times: list
    snaps: list  # snaps[rep][i] at times[i]
    probe_degrees: np.ndarray | None
    log: object

    @property
    def params(self):
        return self.spec.params

    def last(self):
        return [s[-1] for s in self.snaps]

    def write(self, name, text):
        write_atomic(self.root / name, text)


def _as_tuple(v):
    return v if isinstance(v, tuple) else (v,)


def _fmt(x):
    return repr(float(x))


def _supnorm(ctx, a):
    k_max = int(a.get("k_max", 10**5))
    dist = theory.limit_pk(ctx.params.weights, ctx.params.delta, k_max)
    per_t = []
    for i, t in enumerate(ctx.times):
        per_t.append(float(np.mean([analysis.sup_norm_deviation(s[i], dist) for s in ctx.snaps])))
    ctx.write("decay.csv", "t,sup_norm\n" + "".join(f"{t},{_fmt(v)}\n" for t, v in zip(ctx.times, per_t)))
    gamma = analysis.decay_exponent(list(zip(ctx.times, per_t)))
    ratio = per_t[0] / per_t[-1] if per_t[-1] > 0 else math.inf
    lo, hi = a.get("gamma_lo", 0.3), a.get("gamma_hi", 0.6)
    min_ratio = a.get("min_ratio", 3.0)
    return {"t": ctx.times, "sup_norm": per_t, "gamma": gamma, "ratio_first_last": ratio,
            "gamma_range": [lo, hi], "min_ratio": min_ratio,
            "passed": lo < gamma < hi and ratio >= min_ratio}


def _pk_spot(ctx, a):
    ks = [int(k) for k in _as_tuple(a.get("ks", (1.0, 2.0, 3.0)))]
    nsigma = a.get("nsigma", 3.0)
    dist = theory.limit_pk(ctx.params.weights, ctx.params.delta, max(ks))
    agg = analysis.aggregate(ctx.last())
    rows, z = [], []
    for k in ks:
        m, se = agg.at(k)
        pk = float(dist.pk(k))
        zk = (m - pk) / se if se > 0 else (0.0 if m == pk else math.inf)
        rows.append(f"{k},{_fmt(m)},{_fmt(se)},{_fmt(pk)},{_fmt(zk)}\n")
        z.append(zk)
    ctx.write("pk_spot.csv", "k,mean_p_k,stderr,p_k,z\n" + "".join(rows))
    return {"t": agg.t, "ks": ks, "z": z, "nsigma": nsigma,
            "passed": all(abs(v) <= nsigma for v in z)}


def _hill(ctx, a):
    fraction = a.get("fraction", 0.01)
    target = a.get("target")
    if target is None:
        target = theory.exponents(ctx.params.weights, ctx.params.delta).tau
    tol = a.get("tol", 0.3)
    est = [analysis.hill_from_stats(s, fraction) for s in ctx.last()]
    ctx.write("hill.csv", "rep,tau_hat\n" + "".join(f"{r},{_fmt(v)}\n" for r, v in enumerate(est)))
    mean = float(np.mean(est))
    return {"t": ctx.times[-1], "fraction": fraction, "tau_hat": mean, "target": target, "tol": tol,
            "passed": abs(mean - target) <= tol}


def _ccdf_bound(ctx, a):
    nsigma = a.get("nsigma", 3.0)
    reports = [analysis.ccdf_lower_bound_check(s, ctx.params.weights, nsigma) for s in ctx.last()]
    r0 = reports[0]
    rows = "".join(f"{int(k)},{_fmt(o)},{_fmt(b)},{_fmt(sl)}\n"
                   for k, o, b, sl in zip(r0.ks, r0.observed, r0.bound, r0.slack))
    ctx.write("ccdf_bound.csv", "k,p_geq_k,bound,slack\n" + rows)
    return {"t": r0.t, "nsigma": nsigma, "reps_checked": len(reports),
            "violations": sum(r.n_violations for r in reports),
            "max_violation": max(r.max_violation for r in reports),
            "passed": all(r.passed for r in reports)}


def _coupling(ctx, a):
    p = ctx.params
    av = a.get("a", ctx.spec.coupling_a)
    ts = a.get("t")
    if ts is None:
        ts = [10**j for j in range(2, 19) if 10**j < p.t_max] + [p.t_max]
    ts = [int(t) for t in _as_tuple(ts)]
    growth = analysis.coupling_growth(p, av, ts, ctx.spec.reps)
    ctx.write("coupling.csv", growth.to_csv())
    b_max = a.get("b_max", 1.0)
    out = {"a": av, "t": ts, "reps": ctx.spec.reps, "mean_U": growth.mean_U, "slope": growth.slope,
           "b_max": b_max, "growth_passed": growth.slope < b_max}
    passed = out["growth_passed"]
    n = int(a.get("marginal_reps", 0))
    if n > 0:
        mt = int(a.get("marginal_t", min(1000, p.t_max)))
        nsigma = a.get("nsigma", 3.0)
        pm = replace(p, t_max=mt)
        coupled = [EmpiricalStats.from_degrees(engine.coupled_run(pm, av, r).degrees, mt)
                   for r in range(n)]
        plain = [s[0] for s in engine.run_replications(pm, n, [mt], workers=ctx.workers, first_rep=n)]
        ac, ap = analysis.aggregate(coupled), analysis.aggregate(plain)
        per_bin = analysis.compare_counts(ac, ap, 100, nsigma)
        pooled = analysis.compare_counts(ac, ap, 100, nsigma, pooled=True)
        rows = "".join(f"{int(k)},{_fmt(z)}\n" for k, z in zip(pooled.ks, pooled.z))
        ctx.write("coupling_marginal.csv", "k,z\n" + rows)
        out["marginal"] = {
            "t": mt, "reps": n, "ks": per_bin.ks, "z": per_bin.z, "worst_z": per_bin.worst,
            "pooled_bins": len(pooled.ks), "pooled_worst_z": pooled.worst,
            "pooled_chi2_pvalue": pooled.chi2_pvalue,
            "passed": per_bin.passed and pooled.chi2_pvalue > 0.0027,
        }
        passed = passed and out["marginal"]["passed"]
    out["passed"] = passed
    return out


def _moments(ctx, a):
    p = ctx.params
    s = a.get("s")
    probes = [int(i) for i in _as_tuple(a.get("probes", DEFAULT_PROBES))]
    rep = analysis.moment_report(ctx.probe_degrees, probes, s, p.weights.tau_w, p.t_max)
    ctx.write("moments.csv", rep.to_csv())
    tol = a.get("tol", 0.2)
    return {"s": s, "t": p.t_max, "probes": probes, "mean": rep.mean, "stderr": rep.stderr,
            "slope": rep.slope, "target": rep.envelope_slope, "tol": tol,
            "within_bound": rep.slope >= rep.envelope_slope - tol,
            "passed": abs(rep.slope - rep.envelope_slope) <= tol}


def _norming(ctx, a):
    p = ctx.params
    reps = int(a.get("reps", ctx.spec.reps))
    ts = [int(t) for t in _as_tuple(a.get("t"))]
    rep = analysis.norming_moment_check(p.weights, a.get("s"), ts, reps, p.seed)
    rep.spread_limit = a.get("spread", 2.0)
    rep.bound_limit = a.get("bound", 10.0)
    rows = "".join(f"{t},{_fmt(at)},{_fmt(mp)},{_fmt(rp)},{_fmt(mn)},{_fmt(pn)}\n" for t, at, mp, rp, mn, pn
                   in zip(rep.t_values, rep.a_t, rep.mean_pos, rep.ratio_pos, rep.mean_neg, rep.product_neg))
    ctx.write("norming.csv", "t,a_t,mean_L_s,ratio,mean_L_neg_s,product\n" + rows)
    return rep.summary()


def _theory_table(ctx, a):
    p = ctx.params
    k_max = int(a.get("k_max", 10**4))
    dist = theory.limit_pk(p.weights, p.delta, k_max)
    ctx.write("theory.csv", dist.to_csv())
    ctx.write("theory.json", dist.header_json() + "\n")
    out = dict(dist.header())
    out["passed"] = True
    if a.get("slope_lo") is not None:
        slope = theory.asymptotic_slope(dist, int(a.get("slope_lo")), int(a.get("slope_hi")))
        target = a.get("target", -dist.tau)
        tol = a.get("tol", 0.1)
        out.update(slope=slope, target=target, tol=tol, passed=abs(slope - target) <= tol)
    return out


_ANALYSES = {
    "supnorm": _supnorm,
    "pk_spot": _pk_spot,
    "hill": _hill,
    "ccdf_bound": _ccdf_bound,
    "coupling": _coupling,
    "moments": _moments,
    "norming": _norming,
    "theory_table": _theory_table,
}
