"""Power-weight extremal families: ε-sweeps, exponent fits and saturation checks.

Each experiment evaluates, for every ε, the data norms (closed form), the
``A_{P,q}`` and ``A_∞`` characteristics, and the weighted norm of the
operator applied to the extremal data.  Blow-up rates are fitted on log-log
axes and compared against the sharp exponents.

Exponents are reported as powers of ε: a quantity that grows like ``ε^{-3/2}``
has exponent ``-3/2``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .exceptions import ConfigError
from .geometry import RootSystem
from .gridfn import (ExponentData, GridFunction, HomogeneousCore, discretize_power,
                     power_ball_integral, rational)
from .operators import multilinear_integral, multilinear_maximal
from .weights import CubeFamily, WeightVector, a_infty_constant, a_pq_constant, two_weight_constant

THEOREMS = ("T1", "T2", "T3")
SLOPE_TOL = 0.1


def default_eps() -> list[Fraction]:
    return [Fraction(1, 2**k) for k in range(3, 11)]


def parse_eps(spec: str) -> list[Fraction]:
    """``"2^-3..2^-10"`` (halving steps) or a comma list of rationals."""
    spec = spec.strip()
    if ".." in spec:
        a, b = (rational(s) for s in spec.split(".."))
        if a <= 0 or b <= 0:
            raise ConfigError("eps range endpoints must be positive")
        hi, lo = max(a, b), min(a, b)
        out, e = [], hi
        while e >= lo:
            out.append(e)
            e /= 2
        if out[-1] != lo:
            raise ConfigError(f"eps range {spec} is not a halving sequence")
        return out
    return [rational(s) for s in spec.split(",") if s.strip()]


def _fmt(x: Fraction) -> str:
    return str(Fraction(x))


def check_hypotheses(theorem: str, e: ExponentData) -> None:
    """Raise :class:`ConfigError` naming every violated hypothesis."""
    theorem = theorem.upper()
    if theorem not in THEOREMS:
        raise ConfigError(f"unknown theorem {theorem!r}; expected one of {', '.join(THEOREMS)}")
    problems = []
    if e.two_weight:
        problems.append("sharpness experiments need the homogeneous exponent relation")
    pc = e.p_conj
    one = 1 - e.alpha / e.n
    if theorem in ("T1", "T2"):
        if not 0 < e.alpha < e.n:
            problems.append(f"need 0 < alpha < n, got alpha={_fmt(e.alpha)}")
        if e.m != 2:
            problems.append(f"the extremal example is built for m = 2, got m={e.m}")
    if theorem == "T1" and not problems:
        i0 = max(range(e.m), key=lambda i: pc[i])
        rest = max(pc[i] for i in range(e.m) if i != i0)
        if pc[i0] * one < rest:
            problems.append(
                f"hypothesis p'_{{i0}}(1-alpha/n) >= max_{{i!=i0}} p_i' fails: "
                f"{_fmt(pc[i0])}*{_fmt(one)} = {_fmt(pc[i0] * one)} < {_fmt(rest)}"
            )
    if theorem == "T2" and not problems:
        first = max(pc) / e.q
        second = min(max([pc[i] for i in range(e.m) if i != j] + [e.q]) / pc[j] for j in range(e.m))
        if min(first, second) > one:
            problems.append(
                "hypothesis min{max p_i'/q, min_j max_{i!=j}{p_i', q}/p_j'} <= 1-alpha/n fails: "
                f"{_fmt(min(first, second))} > {_fmt(one)}"
            )
        elif max(pc) < e.q:
            problems.append(
                f"unsupported branch: max p_i' = {_fmt(max(pc))} < q = {_fmt(e.q)}; "
                "only the constructive case max p_i' >= q is implemented"
            )
    if theorem == "T3" and not 0 <= e.alpha < e.m * e.n:
        problems.append(f"need 0 <= alpha < mn, got alpha={_fmt(e.alpha)}")
    if problems:
        raise ConfigError(problems)


@dataclass(frozen=True)
class ExperimentConfig:
    exponents: ExponentData
    theorem: str
    eps: tuple[Fraction, ...] = field(default_factory=lambda: tuple(default_eps()))
    mesh_level: int = 10
    root: tuple[Fraction, Fraction] = (Fraction(-1), Fraction(1))
    scan_level: int | None = None
    core_margin: int = 6

    def __post_init__(self):
        object.__setattr__(self, "theorem", self.theorem.upper())
        object.__setattr__(self, "eps", tuple(rational(x) for x in self.eps))
        problems = []
        if not self.eps:
            problems.append("eps list is empty")
        if any(not 0 < x <= 1 for x in self.eps):
            problems.append("every eps must lie in (0, 1]")
        if len(set(self.eps)) != len(self.eps):
            problems.append("eps values must be distinct")
        if self.scan_level is not None and self.scan_level > self.mesh_level:
            problems.append("scan_level cannot exceed mesh_level")
        if problems:
            raise ConfigError(problems)
        check_hypotheses(self.theorem, self.exponents)

    def system(self) -> RootSystem:
        return RootSystem.box(self.root[0], self.root[1], self.mesh_level, n=self.exponents.n)

    def core(self) -> HomogeneousCore | None:
        r = Fraction(2) ** (self.core_margin - self.mesh_level)
        lo, hi = self.root
        if not (lo <= -r and hi >= r):
            return None
        return HomogeneousCore(r)


@dataclass
class ExtremalFamily:
    """Degrees of the power data ``f_i = |x|^{a_i} χ_B`` and weights ``w_i = |x|^{b_i}``."""

    f_degrees: list[float]
    w_degrees: list[float]


def extremal_family(theorem: str, e: ExponentData, eps: Fraction) -> ExtremalFamily:
    n = e.n
    d = float(eps) - n
    if theorem in ("T1", "T2"):
        pc = e.p_conj
        i0 = max(range(e.m), key=lambda i: pc[i])
        fdeg = [d / float(e.p[i]) for i in range(e.m)]
        fdeg[i0] = d
        wdeg = [0.0] * e.m
        wdeg[i0] = -d / float(pc[i0])
        return ExtremalFamily(fdeg, wdeg)
    return ExtremalFamily([d] * e.m, [-d / float(pc) for pc in e.p_conj])


@dataclass
class Fit:
    name: str
    exponent: float
    stderr: float
    target: float
    kind: str = "equal"  # or "at_least"
    tol: float = SLOPE_TOL

    @property
    def passed(self) -> bool:
        if self.kind == "at_least":
            return self.exponent >= self.target - self.tol
        return abs(self.exponent - self.target) <= self.tol


def fit_exponent(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of ``log value`` against ``log(1/ε)`` and its standard error."""
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise ValueError("fitting needs at least 3 points")
    if any(v <= 0 or not math.isfinite(v) for _, v in pts):
        raise ValueError("fitted values must be positive and finite")
    if any(e <= 0 for e, _ in pts):
        raise ValueError("eps must be positive")
    if len({e for e, _ in pts}) != len(pts):
        raise ValueError("duplicate eps values make the regression degenerate")
    x = np.log([1.0 / e for e, _ in pts])
    y = np.log([v for _, v in pts])
    res = stats.linregress(x, y)
    return float(res.slope), float(res.stderr)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[dict]
    fits: list[Fit]
    checks: dict

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.fits) and all(
            c.get("passed", True) for c in self.checks.values() if isinstance(c, dict)
        )

    def columns(self) -> list[str]:
        m = self.config.exponents.m
        return (["eps"] + [f"norm_f{i + 1}" for i in range(m)] + ["a_Pq"]
                + [f"a_infty_{i + 1}" for i in range(m)] + ["lhs_norm"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        cols = self.columns()
        wr.writerow(cols)
        for row in self.rows:
            wr.writerow([f"{row[c]:.17g}" for c in cols])
        wr.writerow([])
        wr.writerow(["quantity", "target", "exponent", "stderr", "kind", "passed"])
        for f in self.fits:
            wr.writerow([f.name, f"{f.target:.17g}", f"{f.exponent:.17g}", f"{f.stderr:.17g}",
                         f.kind, "pass" if f.passed else "FAIL"])
        for name, c in self.checks.items():
            if isinstance(c, dict):
                wr.writerow([name] + [f"{k}={v:.17g}" if isinstance(v, float) else f"{k}={v}"
                                      for k, v in c.items()])
        return buf.getvalue()

    def to_json(self) -> str:
        cfg = self.config
        payload = {
            "theorem": cfg.theorem,
            "n": cfg.exponents.n, "m": cfg.exponents.m,
            "alpha": _fmt(cfg.exponents.alpha),
            "p": [_fmt(p) for p in cfg.exponents.p], "q": _fmt(cfg.exponents.q),
            "mesh_level": cfg.mesh_level,
            "rows": self.rows,
            "fits": [dict(asdict(f), passed=f.passed) for f in self.fits],
            "checks": self.checks,
        }
        return json.dumps(payload, indent=2)


def _norms(fam: ExtremalFamily, e: ExponentData) -> list[float]:
    out = []
    for a, b, p in zip(fam.f_degrees, fam.w_degrees, e.p):
        p = float(p)
        out.append(power_ball_integral(p * (a + b), 1.0, e.n) ** (1.0 / p))
    return out


def mesh_norms(fam: ExtremalFamily, e: ExponentData, system: RootSystem,
               core: HomogeneousCore | None) -> list[float]:
    """Data norms by mesh integration of the discretized ``f_i`` and ``w_i``."""
    out = []
    for a, b, p in zip(fam.f_degrees, fam.w_degrees, e.p):
        p = float(p)
        field_ = discretize_power(a, system).values ** p * discretize_power(b, system).values ** p
        deg = p * (a + b)
        if core is not None and deg < 0:
            total = core.integral(field_, system, deg)
        else:
            total = math.fsum(field_.ravel()) * system.cell_volume
        out.append(total ** (1.0 / p))
    return out


def _inside_ball(system: RootSystem) -> np.ndarray:
    grids = np.meshgrid(*(system.centers(d) for d in range(system.n)), indexing="ij")
    return np.sqrt(sum(g * g for g in grids)) < 1.0


def _weighted_norm(op: np.ndarray, u: GridFunction, q: float, degree: float,
                   core: HomogeneousCore | None, singular: bool) -> float:
    system = u.system
    field_ = op**q * u.values
    if core is not None and singular:
        return core.integral(field_, system, degree) ** (1.0 / q)
    return (math.fsum(field_.ravel()) * system.cell_volume) ** (1.0 / q)


def _run(cfg: ExperimentConfig, operator: str) -> ExperimentReport:
    e = cfg.exponents
    n, m = e.n, e.m
    q = float(e.q)
    alpha = float(e.alpha)
    system = cfg.system()
    core = cfg.core()
    family = CubeFamily(system, cfg.scan_level)
    ball = _inside_ball(system)
    rows, extra = [], []
    for eps in sorted(cfg.eps, reverse=True):
        fam = extremal_family(cfg.theorem, e, eps)
        fs = [GridFunction(system, discretize_power(a, system).values * ball) for a in fam.f_degrees]
        wv = WeightVector.power(fam.w_degrees, e, system)
        norms = _norms(fam, e)
        apq = a_pq_constant(wv, family)
        ainf = []
        for b, pc, sig in zip(fam.w_degrees, e.p_conj, wv.sigma):
            deg = -b * float(pc)
            ainf.append(a_infty_constant(sig, family, core if deg < 0 else None, deg))
        lam = sum(fam.f_degrees) + alpha
        u_deg = q * sum(fam.w_degrees)
        M = multilinear_maximal(fs, e)
        op = M if operator == "maximal" else multilinear_integral(fs, e)
        lhs = _weighted_norm(op.values, wv.u, q, q * lam + u_deg, core, lam < 0)
        row = {"eps": float(eps)}
        row.update({f"norm_f{i + 1}": v for i, v in enumerate(norms)})
        row["a_Pq"] = apq
        row.update({f"a_infty_{i + 1}": v for i, v in enumerate(ainf)})
        row["lhs_norm"] = lhs
        rows.append(row)

        info = {"eps": float(eps)}
        prod_norms = math.prod(norms)
        if cfg.theorem == "T1":
            bound = apq ** ((1 - alpha / n) * float(max(e.p_conj)) / q)
        elif cfg.theorem == "T2":
            bound = apq ** ((1 - alpha / n) * max(1.0, float(max(e.p_conj)) / q))
        else:
            p = float(e.p_total)
            bound = apq ** (1 / q) * math.prod(
                a ** ((1 / float(pi)) * (1 - alpha * p / n)) for a, pi in zip(ainf, e.p))
        info["saturation"] = lhs / (bound * prod_norms)
        info["two_weight_gap"] = abs(two_weight_constant(wv.u, wv, family) - apq ** (1 / q)) / apq ** (1 / q)
        inside = ball & (op.values > 0)
        if operator != "maximal":
            Iv = op.values
            ok = Iv > 0
            info["domination_constant"] = float((M.values[ok] / Iv[ok]).max())
        if cfg.theorem == "T1":
            grids = np.meshgrid(*(np.abs(system.centers(d)) for d in range(n)), indexing="ij")
            r = np.sqrt(sum(g * g for g in grids))
            lower = (1.0 / float(eps)) * r ** lam
            info["pointwise_constant"] = float((M.values[inside] / lower[inside]).min())
        extra.append(info)

    fits: list[Fit] = []
    checks: dict = {"per_eps": extra}
    if len(rows) >= 3:
        pts = lambda key: [(r["eps"], r[key]) for r in rows]  # noqa: E731
        pc = [float(x) for x in e.p_conj]
        p = float(e.p_total)
        if cfg.theorem in ("T1", "T2"):
            i0 = max(range(m), key=lambda i: pc[i])
            norm_targets = [-1.0 / float(pi) for pi in e.p]
            apq_target = -q / pc[i0]
            lhs_target = -(1 + 1 / q)
        else:
            norm_targets = [-1.0 / float(pi) for pi in e.p]
            apq_target = -q * (m - 1 / p)
            lhs_target = -(m + 1 / q)
        for i, t in enumerate(norm_targets):
            s, se = fit_exponent(pts(f"norm_f{i + 1}"))
            fits.append(Fit(f"norm_f{i + 1}", -s, se, t))
        s, se = fit_exponent(pts("a_Pq"))
        fits.append(Fit("a_Pq", -s, se, apq_target))
        if cfg.theorem == "T3":
            for i in range(m):
                s, se = fit_exponent(pts(f"a_infty_{i + 1}"))
                fits.append(Fit(f"a_infty_{i + 1}", -s, se, -1.0, kind="at_least"))
        s, se = fit_exponent(pts("lhs_norm"))
        fits.append(Fit("lhs_norm", -s, se, lhs_target))
        sat = [x["saturation"] for x in extra]
        checks["saturation"] = {"min": min(sat), "max": max(sat), "factor": max(sat) / min(sat),
                                "passed": max(sat) / min(sat) <= 8.0}
        checks["two_weight"] = {"max_gap": max(x["two_weight_gap"] for x in extra),
                                "passed": max(x["two_weight_gap"] for x in extra) <= 1e-12}
        if operator != "maximal":
            c = [x["domination_constant"] for x in extra]
            checks["domination"] = {"min": min(c), "max": max(c), "spread": max(c) / min(c) - 1,
                                    "passed": max(c) / min(c) - 1 <= 0.1}
        if cfg.theorem == "T1":
            c = [x["pointwise_constant"] for x in extra]
            checks["pointwise_lower"] = {"min": min(c), "max": max(c), "factor": max(c) / min(c)}
    return ExperimentReport(cfg, rows, fits, checks)


def _require(cfg: ExperimentConfig, theorem: str) -> None:
    if cfg.theorem != theorem:
        raise ConfigError(f"expected a {theorem} configuration, got {cfg.theorem}")


def run_thm1_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """ε-sweep of ``𝓜_α`` on the single-singular-slot family."""
    _require(cfg, "T1")
    return _run(cfg, "maximal")


def run_thm2_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """The T1 sweep with ``𝓘_α`` in place of ``𝓜_α``, plus the ratio ``𝓜_α/𝓘_α``."""
    _require(cfg, "T2")
    if cfg.exponents.m * cfg.exponents.n > 2:
        raise ConfigError("the fractional integral quadrature supports m*n <= 2")
    return _run(cfg, "integral")


def run_thm3_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """ε-sweep with every slot singular; checks saturation of the mixed bound."""
    _require(cfg, "T3")
    return _run(cfg, "maximal")


RUNNERS = {"T1": run_thm1_experiment, "T2": run_thm2_experiment, "T3": run_thm3_experiment}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[cfg.theorem](cfg)
