"""Experiment specs in a small ``key = value`` format.

One assignment per line (``#`` starts a comment), or several on one line
separated by commas::

    name = theorem1_const_m1
    delta = 0
    weights = const:m=1
    t_max = 100000
    seed = 1
    reps = 20
    snapshots = 1000, 10000, 100000
    analyses = [supnorm(gamma_lo=0.3, gamma_hi=0.6), pk_spot(ks=1|2|3)]

``snapshots`` is a comma list or ``geom:base=b`` (powers ``b, b^2, ...`` up to
``t_max``, plus ``t_max``).  Analysis arguments are numbers, or lists
separated by ``|``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .engine import ConfigurationError, Fitness, ModelParams, parse_fitness
from .weights import parse_weights

KEYS = ("name", "delta", "weights", "t_max", "seed", "reps", "snapshots", "rule", "eta",
        "zeta", "coupling_a", "analyses", "out_dir", "workers", "sequential_update")
_ALIASES = {"snapshot": "snapshots"}

# name -> allowed argument names
ANALYSES = {
    "supnorm": {"gamma_lo", "gamma_hi", "min_ratio", "k_max"},
    "pk_spot": {"ks", "nsigma"},
    "hill": {"fraction", "target", "tol"},
    "ccdf_bound": {"nsigma"},
    "coupling": {"a", "t", "b_max", "marginal_t", "marginal_reps", "nsigma"},
    "moments": {"s", "probes", "tol"},
    "norming": {"s", "t", "reps", "spread", "bound"},
    "theory_table": {"k_max", "slope_lo", "slope_hi", "target", "tol"},
}

_NAME_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.-]*$")


class ConfigError(ValueError):
    """All problems found in a config, each prefixed with its line number."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class Analysis:
    name: str
    args: tuple = ()  # sorted (key, value) pairs; value is a float or a tuple of floats

    def get(self, key, default=None):
        return dict(self.args).get(key, default)

    def to_text(self) -> str:
        if not self.args:
            return self.name
        parts = []
        for k, v in self.args:
            v = "|".join(_num(x) for x in v) if isinstance(v, tuple) else _num(v)
            parts.append(f"{k}={v}")
        return f"{self.name}({', '.join(parts)})"


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    params: ModelParams
    reps: int = 1
    snapshots: tuple = ()
    analyses: tuple = ()
    out_dir: str = "parid-out"
    workers: int | None = None
    coupling_a: float | None = None

    def analysis(self, name):
        return next((a for a in self.analyses if a.name == name), None)

    def to_text(self) -> str:
        p = self.params
        lines = [
            f"name = {self.name}",
            f"delta = {_num(p.delta)}",
            f"weights = {p.weights.spec}",
            f"t_max = {p.t_max}",
            f"seed = {p.seed}",
            f"reps = {self.reps}",
            f"snapshots = {', '.join(str(t) for t in self.snapshots)}",
        ]
        if p.rule is not None:
            lines += ["rule = fitness", f"eta = {p.rule.eta.spec}", f"zeta = {p.rule.zeta.spec}"]
        if p.sequential_update:
            lines.append("sequential_update = true")
        if self.coupling_a is not None:
            lines.append(f"coupling_a = {_num(self.coupling_a)}")
        lines.append(f"analyses = [{', '.join(a.to_text() for a in self.analyses)}]")
        lines.append(f"out_dir = {self.out_dir}")
        if self.workers is not None:
            lines.append(f"workers = {self.workers}")
        return "\n".join(lines) + "\n"


def _num(x) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


# ---------------------------------------------------------------------------
# lexing


def _split_top(text, sep=","):
    """Split on ``sep`` outside brackets and parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


_KEY_START = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _assignments(line):
    """Break a line into ``key=value`` chunks.

    A comma only ends an assignment when the next chunk starts a new known
    key, so ``weights = explicit:1=0.5,2=0.5`` stays in one piece.
    """
    chunks = []
    for piece in _split_top(line):
        m = _KEY_START.match(piece)
        if chunks and not (m and (m.group(1).lower() in KEYS or m.group(1).lower() in _ALIASES)):
            chunks[-1] += "," + piece
        else:
            chunks.append(piece)
    return chunks


def _strip_comment(line):
    out, quote = [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def _unquote(v):
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def _int(v):
    x = float(v)
    if not x.is_integer():
        raise ValueError(f"{v!r} is not an integer")
    return int(v) if re.fullmatch(r"[+-]?\d+", v.strip()) else int(x)


def _float(v):
    x = float(v)
    if math.isnan(x):
        raise ValueError("nan is not allowed")
    return x


def _bool(v):
    low = v.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


def _parse_analyses(v):
    v = v.strip()
    if v.startswith("[") and v.endswith("]"):
        v = v[1:-1]
    out, errors = [], []
    for item in filter(None, (s.strip() for s in _split_top(v))):
        m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?", item, re.S)
        if not m:
            errors.append(f"cannot parse analysis {item!r}")
            continue
        name = m.group(1).lower()
        if name not in ANALYSES:
            errors.append(f"unknown analysis {name!r} (known: {', '.join(ANALYSES)})")
            continue
        args = {}
        for arg in filter(None, (s.strip() for s in _split_top(m.group(2) or ""))):
            key, eq, val = arg.partition("=")
            key = key.strip().lower()
            if not eq:
                errors.append(f"{name}: argument {arg!r} is not key=value")
            elif key not in ANALYSES[name]:
                errors.append(f"{name}: unknown argument {key!r} (allowed: {', '.join(sorted(ANALYSES[name]))})")
            else:
                try:
                    vals = tuple(_float(x) for x in val.split("|"))
                except ValueError:
                    errors.append(f"{name}: argument {key}={val.strip()!r} is not numeric")
                    continue
                args[key] = vals if "|" in val else vals[0]
        out.append(Analysis(name, tuple(sorted(args.items()))))
    return out, errors


def _parse_snapshots(v, t_max):
    v = v.strip().strip("[]").strip()
    if not v:
        return ()
    if v.lower().startswith("geom"):
        m = re.fullmatch(r"geom\s*:\s*base\s*=\s*([0-9.eE+]+)", v, re.I)
        if not m:
            raise ValueError(f"cannot parse snapshot schedule {v!r}")
        base = float(m.group(1))
        if not base > 1:
            raise ValueError("geometric snapshot base must exceed 1")
        if t_max is None:
            raise ValueError("geometric snapshots need t_max")
        times, j = set(), 1
        while base**j <= t_max:
            times.add(int(round(base**j)))
            j += 1
        times.add(t_max)
        return tuple(sorted(t for t in times if 1 <= t <= t_max))
    times = tuple(_int(x) for x in v.split(","))
    if list(times) != sorted(set(times)):
        raise ValueError("snapshot times must be strictly increasing")
    return times


# ---------------------------------------------------------------------------


def parse_config(text: str) -> ExperimentSpec:
    """Parse and validate a config; raises :class:`ConfigError` listing every problem."""
    errors = []
    raw = {}  # key -> (value, line)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(line).strip()
        if not line or (line.startswith("[") and "=" not in line):  # blank or TOML table header
            continue
        for chunk in _assignments(line):
            key, eq, value = chunk.partition("=")
            key = key.strip().lower()
            key = _ALIASES.get(key, key)
            if not eq or not key:
                errors.append(f"line {lineno}: expected key = value, got {chunk.strip()!r}")
            elif key not in KEYS:
                errors.append(f"line {lineno}: unknown key {key!r}")
            elif key in raw:
                errors.append(f"line {lineno}: duplicate key {key!r} (first set on line {raw[key][1]})")
            else:
                raw[key] = (_unquote(value), lineno)

    def at(key):
        return f"line {raw[key][1]}" if key in raw else "config"

    vals = {}

    def conv(key, fn, required=False, default=None):
        if key not in raw:
            if required:
                errors.append(f"config: missing required key {key!r}")
            vals[key] = default
            return
        try:
            vals[key] = fn(raw[key][0])
        except (ValueError, ConfigurationError) as exc:
            errors.append(f"{at(key)}: bad {key}: {exc}")
            vals[key] = None

    conv("name", str, default="experiment")
    conv("delta", _float, required=True)
    conv("weights", parse_weights, required=True)
    conv("t_max", _int, required=True)
    conv("seed", _int, default=0)
    conv("reps", _int, default=1)
    conv("coupling_a", _float)
    conv("out_dir", str, default="parid-out")
    conv("workers", _int)
    conv("sequential_update", _bool, default=False)
    conv("rule", lambda v: v.strip().lower(), default="parid")
    conv("eta", parse_fitness)
    conv("zeta", parse_fitness)

    name = vals["name"]
    if name is not None and not _NAME_RE.match(name):
        errors.append(f"{at('name')}: name {name!r} is not a valid directory component")
    if vals["reps"] is not None and vals["reps"] < 1:
        errors.append(f"{at('reps')}: reps must be at least 1")
    if vals["workers"] is not None and vals["workers"] < 1:
        errors.append(f"{at('workers')}: workers must be at least 1")
    t_max = vals["t_max"]
    if t_max is not None and t_max < 1:
        errors.append(f"{at('t_max')}: t_max must be at least 1")
        t_max = None

    snapshots = ()
    if "snapshots" in raw:
        try:
            snapshots = _parse_snapshots(raw["snapshots"][0], t_max)
            if t_max is not None and snapshots and not (snapshots[0] >= 1 and snapshots[-1] <= t_max):
                errors.append(f"{at('snapshots')}: snapshot times must lie in [1, t_max={t_max}]")
        except ValueError as exc:
            errors.append(f"{at('snapshots')}: {exc}")

    analyses = []
    if "analyses" in raw:
        analyses, errs = _parse_analyses(raw["analyses"][0])
        errors += [f"{at('analyses')}: {e}" for e in errs]

    rule = None
    if vals["rule"] not in (None, "parid", "fitness"):
        errors.append(f"{at('rule')}: rule must be 'parid' or 'fitness', got {vals['rule']!r}")
    elif vals["rule"] == "fitness":
        if vals["eta"] is None or vals["zeta"] is None:
            errors.append(f"{at('rule')}: the fitness rule needs both eta and zeta laws")
        else:
            try:
                rule = Fitness(vals["eta"], vals["zeta"])
            except ConfigurationError as exc:
                errors.append(f"{at('eta')}: {exc}")
    elif "eta" in raw or "zeta" in raw:
        errors.append(f"{at('eta' if 'eta' in raw else 'zeta')}: eta/zeta are only used with rule = fitness")

    params = None
    if vals["delta"] is not None and vals["weights"] is not None and t_max is not None \
            and vals["seed"] is not None:
        try:
            params = ModelParams(vals["delta"], vals["weights"], t_max, vals["seed"], rule,
                                 bool(vals["sequential_update"]))
        except (ConfigurationError, ValueError) as exc:
            line = at("delta") if "delta" in str(exc) else at("t_max")
            errors.append(f"{line}: {exc}")

    if params is not None:
        for a in analyses:
            errors += [f"{at('analyses')}: {e}" for e in
                       _check_analysis(a, params, snapshots, vals["coupling_a"])]

    if errors:
        raise ConfigError(errors)
    return ExperimentSpec(name=name, params=params, reps=vals["reps"], snapshots=tuple(snapshots),
                          analyses=tuple(analyses), out_dir=vals["out_dir"],
                          workers=vals["workers"], coupling_a=vals["coupling_a"])


def _check_analysis(a, params, snapshots, coupling_a):
    """Parse-time preconditions of one analysis."""
    w = params.weights
    tau_w = w.tau_w
    errs = []
    needs_limit = a.name in ("supnorm", "pk_spot", "theory_table")
    if needs_limit and not w.has_finite_mean:
        errs.append(f"{a.name} analysis needs finite-mean weights (the limit law is unknown otherwise)")
    if a.name in ("supnorm", "pk_spot", "theory_table", "coupling", "moments", "ccdf_bound") \
            and not params.is_parid:
        errs.append(f"{a.name} analysis is defined for the PARID rule only")
    if a.name == "supnorm" and len(snapshots) < 2:
        errs.append("supnorm analysis needs at least two snapshot times")
    if a.name in ("pk_spot", "hill", "ccdf_bound") and not snapshots:
        errs.append(f"{a.name} analysis needs at least one snapshot")
    if a.name == "hill" and a.get("target") is None and not params.is_parid:
        errs.append("hill analysis under the fitness rule needs an explicit target")
    if a.name in ("moments", "norming"):
        if not 1 < tau_w < 2:
            errs.append(f"{a.name} analysis requires tau_W in (1,2) (infinite-mean power-law "
                        f"weights), got weights {w.spec}")
        s = a.get("s")
        if s is None:
            errs.append(f"{a.name} analysis needs s")
        elif 1 < tau_w < 2 and not 0 < s < tau_w - 1:
            errs.append(f"{a.name}: need 0 < s < tau_W - 1 = {tau_w - 1:g}, got s={s:g}")
    if a.name == "moments":
        probes = a.get("probes", (10.0, 100.0, 1000.0))
        probes = probes if isinstance(probes, tuple) else (probes,)
        if any(p < 1 or p > params.t_max or not float(p).is_integer() for p in probes):
            errs.append(f"moments: probe vertices must be integers in [1, t_max={params.t_max}]")
    if a.name == "norming":
        ts = a.get("t")
        ts = ts if isinstance(ts, tuple) else (ts,) if ts is not None else ()
        if len(ts) < 2:
            errs.append("norming analysis needs at least two times t=t1|t2|...")
    if a.name == "coupling":
        av = a.get("a", coupling_a)
        if av is None:
            errs.append("coupling analysis needs a (argument a= or key coupling_a)")
        elif not 0 < av < 0.5:
            errs.append(f"coupling: truncation exponent a must lie in (0, 1/2), got {av:g}")
        ts = a.get("t")
        ts = ts if isinstance(ts, tuple) else (ts,) if ts is not None else ()
        if ts and len(ts) < 2:
            errs.append("coupling: need at least two horizons t=t1|t2|...")
        mt = a.get("marginal_t")
        if mt is not None and not 1 <= mt <= params.t_max:
            errs.append(f"coupling: marginal_t must lie in [1, t_max={params.t_max}]")
    if a.name == "theory_table":
        lo, hi = a.get("slope_lo"), a.get("slope_hi")
        km = a.get("k_max", 10**4)
        if (lo is None) != (hi is None):
            errs.append("theory_table: give both slope_lo and slope_hi")
        elif lo is not None and not 1 <= lo < hi <= km:
            errs.append("theory_table: need 1 <= slope_lo < slope_hi <= k_max")
    return errs
