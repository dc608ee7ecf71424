"""Command line entry point, run configuration files and the seeded random corpus.

Random cases are drawn from a counter-based generator keyed by
``(seed, case)``, so any single case can be replayed without generating the
ones before it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import ConfigError, InvariantViolation
from .geometry import RootSystem
from .gridfn import ExponentData, GridFunction, discretize_power, rational
from .operators import multilinear_integral, multilinear_maximal
from .sharpness import ExperimentConfig, default_eps, parse_eps, run_experiment
from .sparse import (CarlesonSequence, build_sparse, carleson_embedding_check, dumps,
                     selection_check, verify_sparse)
from .weights import (CubeFamily, WeightVector, a_infty_constant, a_pq_constant,
                      reverse_holder_check, two_weight_constant)

FORMATS = ("csv", "json")
CONFIG_KEYS = ("n", "m", "alpha", "p", "q", "eps_list", "mesh_level", "root", "scan_level", "seed", "format")
OPTIONAL_KEYS = ("q", "two_weight")


# -- random corpus ------------------------------------------------------------

def case_rng(seed: int, case: int = 0) -> np.random.Generator:
    """Generator for case ``case`` of the corpus keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(case)))


def random_step_weight(system: RootSystem, rng: np.random.Generator, spread: float = 1.5) -> GridFunction:
    """Log-normal values that are constant on dyadic blocks of random size."""
    levels = system.max_level - system.top_level
    coarse = int(rng.integers(0, levels + 1))
    shape = tuple(s // 2**coarse for s in system.cells_shape)
    vals = np.exp(spread * rng.standard_normal(shape))
    for d in range(system.n):
        vals = np.repeat(vals, 2**coarse, axis=d)
    return GridFunction(system, vals)


def random_function(system: RootSystem, rng: np.random.Generator) -> GridFunction:
    """Nonnegative data with spikes and zeros, the hard case for stopping times."""
    vals = rng.exponential(1.0, system.cells_shape) ** 3
    vals *= rng.random(system.cells_shape) < rng.uniform(0.2, 1.0)
    return GridFunction(system, vals)


def random_exponents(rng: np.random.Generator, m: int = 2, n: int = 1,
                     alphas: Sequence = (Fraction(1, 2), Fraction(1)), q_max: float = math.inf) -> ExponentData:
    """Exponents ``p_i = k/4`` satisfying homogeneity with ``q <= q_max``."""
    alpha = Fraction(alphas[int(rng.integers(len(alphas)))])
    while True:
        ps = [Fraction(int(rng.integers(5, 25)), 4) for _ in range(m)]
        inv = sum(1 / p for p in ps) - alpha / n
        if inv > 0 and 1 / inv <= q_max:
            return ExponentData.make(n, alpha, ps)


# -- function specs -------------------------------------------------------------

def parse_function(spec: str, system: RootSystem, rng: np.random.Generator) -> GridFunction:
    """``ones``, ``chi:a:b`` (indicator of [a,b)^n), ``power:a`` (|x|^a) or ``random``."""
    kind, _, rest = spec.partition(":")
    if kind == "ones":
        return GridFunction.constant(system, 1.0)
    if kind == "chi":
        a, b = (float(rational(v)) for v in rest.split(":"))
        return GridFunction.from_callable(
            system, lambda *xs: np.prod([(x >= a) & (x < b) for x in xs], axis=0).astype(float))
    if kind == "power":
        return discretize_power(float(rational(rest)), system)
    if kind == "random":
        return random_function(system, rng)
    raise ConfigError(f"unknown function spec {spec!r} (use ones, chi:a:b, power:a, random)")


# -- configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    exponents: ExponentData
    eps: tuple[Fraction, ...] = field(default_factory=lambda: tuple(default_eps()))
    mesh_level: int = 10
    root: tuple[Fraction, Fraction] = (Fraction(-1), Fraction(1))
    scan_level: int | None = None
    seed: int = 0
    format: str = "csv"
    subcommand: str | None = None
    output: str | None = None

    def system(self) -> RootSystem:
        return RootSystem.box(self.root[0], self.root[1], self.mesh_level, n=self.exponents.n)

    def experiment(self, theorem: str) -> ExperimentConfig:
        return ExperimentConfig(self.exponents, theorem, self.eps, self.mesh_level, self.root, self.scan_level)


def parse_root(text: str) -> tuple[Fraction, Fraction]:
    parts = text.strip().strip("[]()").split(",")
    if len(parts) != 2:
        raise ConfigError(f"root must be 'lo,hi', got {text!r}")
    lo, hi = (rational(p) for p in parts)
    if hi <= lo:
        raise ConfigError(f"root [{lo}, {hi}) is empty")
    return lo, hi


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config(path) -> RunConfig:
    """Read a flat ``key = value`` file; every problem is reported at once."""
    raw: dict[str, str] = {}
    problems = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        k, v = (s.strip() for s in line.split(sep, 1))
        if k in raw:
            problems.append(f"duplicate key {k!r}")
        raw[k] = v
    allowed = set(CONFIG_KEYS) | set(OPTIONAL_KEYS)
    for k in raw:
        if k not in allowed:
            problems.append(f"unknown key {k!r}")
    for k in CONFIG_KEYS:
        if k not in OPTIONAL_KEYS and k not in raw:
            problems.append(f"missing key {k!r}")

    def grab(key, fn):
        if key not in raw:
            return None
        try:
            return fn(raw[key])
        except (ValueError, ZeroDivisionError, ConfigError) as exc:
            problems.append(f"{key}: {exc}")
            return None

    n = grab("n", int)
    m = grab("m", int)
    alpha = grab("alpha", rational)
    p = grab("p", lambda s: [rational(v) for v in s.split(",")])
    q = grab("q", rational)
    eps = grab("eps_list", parse_eps)
    level = grab("mesh_level", int)
    root = grab("root", parse_root)
    scan = grab("scan_level", lambda s: None if s.lower() in ("none", "") else int(s))
    seed = grab("seed", int)
    fmt = grab("format", str)
    two = grab("two_weight", _parse_bool) or False
    if fmt is not None and fmt not in FORMATS:
        problems.append(f"format must be one of {FORMATS}, got {fmt!r}")
    exps = None
    if None not in (n, alpha, p):
        try:
            exps = ExponentData.make(n, alpha, p, q=q, two_weight=two, m=m)
        except ConfigError as exc:
            problems.extend(exc.problems)
    if problems:
        raise ConfigError(problems)
    return RunConfig(exps, tuple(eps), level, root, scan, seed, fmt)


# -- CLI ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _add_common(sp: argparse.ArgumentParser, level: int = 10) -> None:
    sp.add_argument("--config", help="flat key = value run configuration")
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--m", type=int)
    sp.add_argument("--p", help="comma list of rationals, e.g. 4/3,4")
    sp.add_argument("--q")
    sp.add_argument("--alpha", default="1/2")
    sp.add_argument("--two-weight", action="store_true")
    sp.add_argument("--level", type=int, default=level, help="mesh level")
    sp.add_argument("--root", default="-1,1")
    sp.add_argument("--scan-level", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=FORMATS, default="csv")
    sp.add_argument("--output", "-o")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sharpfrac", description="Dyadic machinery and sharp-exponent experiments.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    for name, helptext in (("maximal", "multilinear fractional maximal function"),
                           ("integral", "multilinear fractional integral")):
        sp = sub.add_parser(name, help=helptext)
        _add_common(sp, level=8)
        sp.add_argument("--f", action="append", help="function spec per slot: ones, chi:a:b, power:a, random")
        if name == "integral":
            sp.add_argument("--refine-depth", type=int, default=3)
    sp = sub.add_parser("sparse", help="build and verify a stopping-time sparse family")
    _add_common(sp, level=6)
    sp.add_argument("--f", action="append")
    sp.add_argument("--shift", default="0")
    sp = sub.add_parser("constants", help="weight characteristics")
    _add_common(sp, level=6)
    sp.add_argument("--weights", default="ones", help="ones, random, or power:b1;b2;...")
    sp = sub.add_parser("rh-check", help="sharp reverse Hölder check")
    _add_common(sp, level=8)
    sp.add_argument("--weight", default="random", help="ones, random, power:b")
    sp = sub.add_parser("carleson", help="Carleson embedding on random instances")
    _add_common(sp, level=6)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--trials", type=int, default=10)
    sp = sub.add_parser("sharpness", help="epsilon sweep on the extremal families")
    sp.add_argument("theorem", choices=("t1", "t2", "t3"))
    _add_common(sp, level=10)
    sp.add_argument("--eps", default="2^-3..2^-10")
    return ap


def _run_config(args, need_p: bool = True) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        if args.p is None and need_p:
            raise ConfigError("--p is required (or --config)")
        try:
            if args.p is None:
                # single-weight commands ignore the exponents
                p, alpha, q = [Fraction(2)] * (args.m or 1), Fraction(0), None
            else:
                p = [rational(v) for v in args.p.split(",")]
                alpha = rational(args.alpha)
                q = rational(args.q) if args.q else None
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad exponent: {exc}") from exc
        eps = parse_eps(args.eps) if getattr(args, "eps", None) else tuple(default_eps())
        exps = ExponentData.make(args.n, alpha, p, q=q, two_weight=args.two_weight, m=args.m)
        cfg = RunConfig(exps, tuple(eps), args.level, parse_root(args.root), args.scan_level,
                        args.seed, args.format)
    cfg.subcommand = args.command
    cfg.output = args.output
    return cfg


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _field_table(system: RootSystem, values: np.ndarray, fmt: str, name: str) -> str:
    grids = np.meshgrid(*(system.centers(d) for d in range(system.n)), indexing="ij")
    cols = [f"x{d + 1}" for d in range(system.n)] + [name]
    data = np.column_stack([g.ravel() for g in grids] + [values.ravel()])
    if fmt == "json":
        return json.dumps({"columns": cols, "rows": data.tolist()}) + "\n"
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for row in data:
        wr.writerow([f"{v:.17g}" for v in row])
    return buf.getvalue()


def _inputs(args, cfg: RunConfig, system: RootSystem) -> list[GridFunction]:
    specs = args.f or ["ones"] * cfg.exponents.m
    if len(specs) == 1 and cfg.exponents.m > 1:
        specs = specs * cfg.exponents.m
    if len(specs) != cfg.exponents.m:
        raise ConfigError(f"need {cfg.exponents.m} --f specs, got {len(specs)}")
    return [parse_function(s, system, case_rng(cfg.seed, i)) for i, s in enumerate(specs)]


def _cmd_operator(args, cfg: RunConfig) -> int:
    system = cfg.system()
    fs = _inputs(args, cfg, system)
    if args.command == "maximal":
        out = multilinear_maximal(fs, cfg.exponents)
    else:
        out = multilinear_integral(fs, cfg.exponents, refine_depth=args.refine_depth)
    _emit(_field_table(system, out.values, cfg.format, args.command), cfg.output)
    return 0


def _cmd_sparse(args, cfg: RunConfig) -> int:
    system = cfg.system()
    fs = _inputs(args, cfg, system)
    S = build_sparse(fs, cfg.exponents, rational(args.shift))
    rep = verify_sparse(S)
    sel = selection_check(fs, cfg.exponents, S)
    _emit(dumps(S), cfg.output)
    for r in (rep, sel):
        if not r:
            print(f"invariant violated: {r.invariant} at {r.cube}: {r.detail}", file=sys.stderr)
            return 1
    print(f"# {len(S)} cubes in {len(S.stages)} stages; all sparse invariants hold", file=sys.stderr)
    return 0


def _weights(spec: str, cfg: RunConfig, system: RootSystem) -> WeightVector:
    e = cfg.exponents
    if spec == "ones":
        return WeightVector([GridFunction.constant(system)] * e.m, e)
    if spec == "random":
        return WeightVector([random_step_weight(system, case_rng(cfg.seed, i)) for i in range(e.m)], e)
    if spec.startswith("power:"):
        degs = [float(rational(v)) for v in spec[6:].split(";")]
        if len(degs) != e.m:
            raise ConfigError(f"need {e.m} power degrees, got {len(degs)}")
        return WeightVector.power(degs, e, system)
    raise ConfigError(f"unknown weight spec {spec!r}")


def _cmd_constants(args, cfg: RunConfig) -> int:
    system = cfg.system()
    wv = _weights(args.weights, cfg, system)
    fam = CubeFamily(system, cfg.scan_level)
    e = cfg.exponents
    res: dict[str, float] = {}
    if not e.two_weight:
        res["a_Pq"] = a_pq_constant(wv, fam)
    res["two_weight"] = two_weight_constant(wv.u, wv, fam)
    for i, s in enumerate(wv.sigma):
        res[f"a_infty_sigma{i + 1}"] = a_infty_constant(s, fam)
    _emit(_kv(res, cfg.format), cfg.output)
    return 0


def _kv(res: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(res) + "\n"
    return "".join(f"{k},{v!r}\n" for k, v in res.items())


def _cmd_rh(args, cfg: RunConfig) -> int:
    system = cfg.system()
    spec = args.weight
    if spec == "ones":
        w = GridFunction.constant(system)
    elif spec == "random":
        w = random_step_weight(system, case_rng(cfg.seed, 0))
    elif spec.startswith("power:"):
        w = discretize_power(float(rational(spec[6:])), system)
    else:
        raise ConfigError(f"unknown weight spec {spec!r}")
    res = reverse_holder_check(w, CubeFamily(system, cfg.scan_level))
    _emit(_kv({"r": res.r, "worst_ratio": res.worst_ratio, "a_infty": res.a_infty}, cfg.format), cfg.output)
    if res.worst_ratio > 2:
        print(f"reverse Hölder ratio {res.worst_ratio!r} > 2 at {res.worst_cube}", file=sys.stderr)
        return 1
    return 0


def random_carleson_instance(system: RootSystem, rng: np.random.Generator, count: int = 12):
    t = Fraction(int(rng.integers(2)), 3)
    cubes = list(system.cubes([t], finest=system.max_level - 1))
    pick = rng.choice(len(cubes), size=min(count, len(cubes)), replace=False)
    c = {cubes[i]: float(rng.exponential()) for i in pick}
    a = {cubes[i]: float(rng.normal()) for i in pick}
    mu = random_step_weight(system, rng)
    return a, CarlesonSequence(c, mu)


def _cmd_carleson(args, cfg: RunConfig) -> int:
    system = cfg.system()
    rows = []
    for trial in range(args.trials):
        a, c = random_carleson_instance(system, case_rng(cfg.seed, trial))
        C, lhs, rhs = carleson_embedding_check(a, c, args.r, strict=False)
        rows.append({"trial": trial, "C": C, "lhs": lhs, "rhs": rhs, "holds": lhs <= C * rhs})
    if cfg.format == "json":
        text = json.dumps(rows) + "\n"
    else:
        text = "trial,C,lhs,rhs,holds\n" + "".join(
            f"{r['trial']},{r['C']:.17g},{r['lhs']:.17g},{r['rhs']:.17g},{r['holds']}\n" for r in rows)
    _emit(text, cfg.output)
    if not all(r["holds"] for r in rows):
        raise InvariantViolation("Carleson embedding failed on some trial")
    return 0


def _cmd_sharpness(args, cfg: RunConfig) -> int:
    exp = cfg.experiment(args.theorem.upper())
    report = run_experiment(exp)
    _emit(report.to_json() if cfg.format == "json" else report.to_csv(), cfg.output)
    return 0


COMMANDS = {
    "maximal": _cmd_operator,
    "integral": _cmd_operator,
    "sparse": _cmd_sparse,
    "constants": _cmd_constants,
    "rh-check": _cmd_rh,
    "carleson": _cmd_carleson,
    "sharpness": _cmd_sharpness,
}


def cli_main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; 0 on success, 2 on configuration errors, 1 on violated invariants."""
    try:
        args = build_parser().parse_args(argv)
        need_p = args.command not in ("rh-check", "carleson")
        cfg = _run_config(args, need_p=need_p)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(cli_main())
