"""Command line entry point: ``parid generate|theory|verify|couple|moments``."""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, engine, theory
from . import rng as rngmod
from .config import ConfigError, parse_config
from .engine import ConfigurationError, Fitness, ModelParams, parse_fitness
from .runner import dump_json, run_experiment, versions, write_atomic
from .theory import UnsupportedRegimeError
from .weights import parse_weights

DEFAULT_OUT = "parid-out"


def bundled_specs() -> dict:
    """Bundled experiment specs by name."""
    root = resources.files("parid") / "experiments"
    return {p.name[:-5]: p for p in root.iterdir() if p.name.endswith(".toml")}


def _load_config_text(ref: str) -> str:
    path = Path(ref)
    if path.exists():
        return path.read_text()
    specs = bundled_specs()
    name = ref[:-5] if ref.endswith(".toml") else ref
    if name in specs:
        return specs[name].read_text()
    raise FileNotFoundError(f"no config file {ref!r} and no bundled spec of that name "
                            f"(bundled: {', '.join(sorted(specs))})")


def _times(text: str | None, t_max: int):
    if not text:
        return [t_max]
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _params(args) -> ModelParams:
    rule = None
    if getattr(args, "rule", "parid") == "fitness":
        if not (args.eta and args.zeta):
            raise ConfigurationError("--rule fitness needs --eta and --zeta")
        rule = Fitness(parse_fitness(args.eta), parse_fitness(args.zeta))
    return ModelParams(args.delta, parse_weights(args.weights), args.t_max, args.seed, rule,
                       getattr(args, "sequential_update", False))


def _manifest(params, reps, t0, extra=None) -> str:
    d = {
        "params": {"delta": params.delta, "weights": params.weights.spec, "t_max": params.t_max,
                   "rule": "parid" if params.is_parid else
                   {"eta": params.rule.eta.spec, "zeta": params.rule.zeta.spec}},
        "master_seed": params.seed,
        "seed_material": [rngmod.seed_material(params.seed, r) for r in reps],
        "versions": versions(),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_time_s": time.time() - t0,
    }
    d.update(extra or {})
    return dump_json(d)


# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    t0 = time.time()
    params = _params(args)
    out = Path(args.out)
    state, snaps = engine.run(params, _times(args.snapshots, params.t_max), args.rep,
                              record_edges=args.edges)
    for s in snaps:
        write_atomic(out / f"hist_t{s.t:010d}.csv", s.to_csv())
    if args.edges:
        rows = "".join(f"{int(t)},{int(i)}\n" for t, i in state.edge_log)
        write_atomic(out / "edges.csv", "t,i\n" + rows)
    write_atomic(out / "manifest.json", _manifest(params, [args.rep], t0, {
        "snapshots": [s.t for s in snaps], "L_t": state.L_t}))
    print(f"wrote {len(snaps)} snapshot(s) to {out}")
    return 0


def cmd_theory(args) -> int:
    w = parse_weights(args.weights)
    try:
        dist = theory.limit_pk(w, args.delta, args.k_max)
    except UnsupportedRegimeError as exc:
        ex = theory.exponents(w, args.delta)
        print(f"{exc}; tau = tau_w = {ex.tau_w}", file=sys.stderr)
        return 2
    if args.out == "-":
        sys.stdout.write(dist.to_csv())
        print(dist.header_json(), file=sys.stderr)
        return 0
    out = Path(args.out)
    write_atomic(out / "theory.csv", dist.to_csv())
    write_atomic(out / "theory.json", dist.header_json() + "\n")
    print(dist.header_json())
    return 0


def cmd_verify(args) -> int:
    if args.list:
        for name in sorted(bundled_specs()):
            print(name)
        return 0
    if not args.config:
        print("verify needs a config file or bundled spec name (see --list)", file=sys.stderr)
        return 2
    spec = parse_config(_load_config_text(args.config))
    if args.seed is not None:
        spec = replace(spec, params=replace(spec.params, seed=args.seed))
    if args.reps is not None:
        spec = replace(spec, reps=args.reps)
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    res = run_experiment(spec, args.out, workers=args.workers, log=log)
    for name, r in res.report["analyses"].items():
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {name}")
    print(f"artifacts in {res.path}")
    return res.status


def cmd_couple(args) -> int:
    t0 = time.time()
    params = _params(args)
    out = Path(args.out)
    if args.growth:
        rep = analysis.coupling_growth(params, args.a, _times(args.growth, params.t_max), args.reps)
        write_atomic(out / "coupling_growth.csv", rep.to_csv())
        write_atomic(out / "coupling_growth.json", dump_json(rep.summary()))
        print(f"slope of log E[U_t] vs log t: {rep.slope:.4f}")
    runs = [engine.coupled_run(params, args.a, r) for r in range(args.reps)]
    traj = np.mean([c.u_trajectory for c in runs], axis=0)
    rows = "".join(f"{s},{float(u)!r}\n" for s, u in enumerate(traj))
    write_atomic(out / "coupling.csv", "s,mean_U\n" + rows)
    summary = {"a": args.a, "level": runs[0].level, "t_max": params.t_max, "reps": args.reps,
               "mean_U_t": float(traj[-1]),
               "identical_fraction": float(np.mean([c.identical for c in runs]))}
    write_atomic(out / "coupling.json", dump_json(summary))
    write_atomic(out / "manifest.json", _manifest(params, range(args.reps), t0))
    print(f"E[U_t] at t={params.t_max}: {traj[-1]:.6g} over {args.reps} reps")
    return 0


def cmd_moments(args) -> int:
    t0 = time.time()
    params = _params(args)
    out = Path(args.out)
    probes = [int(float(x)) for x in args.probes.split(",")]
    rep = analysis.fractional_moment_scaling(params, args.s, probes, args.reps,
                                             workers=args.workers or 1)
    write_atomic(out / "moments.csv", rep.to_csv())
    summary = {"s": rep.s, "t": rep.t, "reps": rep.reps, "slope": rep.slope,
               "envelope_slope": rep.envelope_slope}
    write_atomic(out / "moments.json", dump_json(summary))
    write_atomic(out / "manifest.json", _manifest(params, range(args.reps), t0))
    print(f"slope {rep.slope:.4f} (envelope exponent {rep.envelope_slope:.4f})")
    return 0


# ---------------------------------------------------------------------------


def _model_flags(p, t_max=None):
    p.add_argument("--weights", required=True, help="const:m=3 | zeta:tau=2.5,kmin=1 | explicit:1=0.5,2=0.5")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--t-max", dest="t_max", type=int, required=t_max is None, default=t_max)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=DEFAULT_OUT)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parid", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="one run with degree snapshots")
    _model_flags(g)
    g.add_argument("--snapshots", help="comma list of times (default: t_max)")
    g.add_argument("--rep", type=int, default=0, help="replication index")
    g.add_argument("--rule", choices=("parid", "fitness"), default="parid")
    g.add_argument("--eta", help="fitness law, e.g. exp:scale=1")
    g.add_argument("--zeta", help="fitness law, e.g. const:v=0.5")
    g.add_argument("--sequential-update", action="store_true")
    g.add_argument("--edges", action="store_true", help="also write the edge list")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("theory", help="limit p_k table and exponents")
    t.add_argument("--weights", required=True)
    t.add_argument("--delta", type=float, default=0.0)
    t.add_argument("--k-max", dest="k_max", type=int, default=10**4)
    t.add_argument("--out", default=DEFAULT_OUT, help="directory, or - for stdout")
    t.set_defaults(func=cmd_theory)

    v = sub.add_parser("verify", help="run an experiment spec")
    v.add_argument("config", nargs="?", help="config file or bundled spec name")
    v.add_argument("--list", action="store_true", help="list bundled specs")
    v.add_argument("--out", default=None, help="override out_dir")
    v.add_argument("--seed", type=int)
    v.add_argument("--reps", type=int)
    v.add_argument("--workers", type=int)
    v.add_argument("-v", "--verbose", action="store_true")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("couple", help="coupled run of G and its truncated twin")
    _model_flags(c)
    c.add_argument("--a", type=float, default=0.4, help="truncation exponent in (0, 1/2)")
    c.add_argument("--reps", type=int, default=1)
    c.add_argument("--growth", help="comma list of horizons for the E[U_t] slope fit")
    c.set_defaults(func=cmd_couple)

    m = sub.add_parser("moments", help="fractional degree moments for infinite-mean weights")
    _model_flags(m)
    m.add_argument("--s", type=float, required=True)
    m.add_argument("--probes", default="10,100,1000")
    m.add_argument("--reps", type=int, default=100)
    m.add_argument("--workers", type=int)
    m.set_defaults(func=cmd_moments)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config errors:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return 2
    except (ConfigurationError, ValueError, FileNotFoundError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
