"""Piecewise-constant functions on the root mesh, exponent bookkeeping and power integrals."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .exceptions import ConfigError, DivergentIntegralError, OutOfSystemError
from .geometry import DyadicCube, GridBlock, RootSystem

WEIGHT_FLOOR = 1e-300

_POW2 = re.compile(r"^\s*([+-]?\d+)\s*\^\s*([+-]?\d+)\s*$")


def rational(value) -> Fraction:
    """Parse ``"4/3"``, ``"2^-3"``, ``"0.5"`` or a number into an exact rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**12)
    s = str(value).strip()
    m = _POW2.match(s)
    if m:
        return Fraction(int(m.group(1))) ** int(m.group(2))
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational: {value!r}") from exc


def conjugate(p) -> Fraction:
    p = rational(p)
    return p / (p - 1)


@dataclass(frozen=True)
class ExponentData:
    """Dimension, multilinearity, fractional order and Lebesgue exponents.

    In homogeneous mode ``sum 1/p_i == 1/q + alpha/n`` exactly.  In two-weight
    mode only ``p <= q`` is required, where ``1/p = sum 1/p_i``.
    """

    n: int
    m: int
    alpha: Fraction
    p: tuple[Fraction, ...]
    q: Fraction
    two_weight: bool = False

    @classmethod
    def make(cls, n: int, alpha, p: Sequence, q=None, two_weight: bool = False,
             m: int | None = None) -> "ExponentData":
        problems = []
        try:
            ps = tuple(rational(v) for v in p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            a = rational(alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        m = len(ps) if m is None else m
        if m != len(ps):
            problems.append(f"m={m} but {len(ps)} exponents p_i were given")
        if n < 1:
            problems.append("dimension n must be >= 1")
        if not (0 <= a < m * n):
            problems.append(f"alpha={a} must lie in [0, m n) = [0, {m * n})")
        for i, pi in enumerate(ps, 1):
            if pi <= 1:
                problems.append(f"p_{i}={pi} must exceed 1")
        inv_p = sum((1 / pi for pi in ps if pi != 0), Fraction(0))
        if q is None:
            if two_weight:
                problems.append("two-weight mode needs an explicit q")
                qv = Fraction(1)
            else:
                inv_q = inv_p - a / n
                if inv_q <= 0:
                    problems.append(
                        f"homogeneity 1/p_1+...+1/p_m = 1/q + alpha/n gives 1/q = {inv_q} <= 0"
                    )
                    qv = Fraction(1)
                else:
                    qv = 1 / inv_q
        else:
            try:
                qv = rational(q)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            if qv <= 0:
                problems.append(f"q={qv} must be positive")
            elif two_weight:
                if inv_p > 0 and 1 / inv_p > qv:
                    problems.append(f"two-weight mode requires p <= q, got p={1 / inv_p}, q={qv}")
            elif inv_p != 1 / qv + a / n:
                problems.append(
                    f"homogeneity 1/p_1+...+1/p_m = 1/q + alpha/n fails: {inv_p} != {1 / qv + a / n}"
                )
        if problems:
            raise ConfigError(problems)
        return cls(n, m, a, ps, qv, two_weight)

    @property
    def p_total(self) -> Fraction:
        return 1 / sum(1 / pi for pi in self.p)

    @property
    def p_conj(self) -> tuple[Fraction, ...]:
        return tuple(conjugate(pi) for pi in self.p)

    @property
    def homogeneous(self) -> bool:
        return not self.two_weight

    def with_slot(self, i: int, p_new) -> "ExponentData":
        ps = list(self.p)
        ps[i] = rational(p_new)
        return ExponentData(self.n, self.m, self.alpha, tuple(ps), self.q, self.two_weight)


class GridFunction:
    """Nonnegative cell-constant function on the mesh of a :class:`RootSystem`.

    Doubles as a weight: ``w(E) = sum over cells of value * |cell ∩ E|``.
    Values are read-only once constructed.
    """

    def __init__(self, system: RootSystem, values):
        arr = np.array(values, dtype=float)
        if arr.size == 1 and system.num_cells != 1:
            arr = np.full(system.cells_shape, float(arr.reshape(-1)[0]))
        arr = arr.reshape(system.cells_shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid function values must be finite")
        if np.any(arr < 0):
            raise ValueError("grid function values must be nonnegative")
        arr.flags.writeable = False
        self.system = system
        self.values = arr

    # -- construction -------------------------------------------------------
    @classmethod
    def constant(cls, system: RootSystem, c: float = 1.0) -> "GridFunction":
        return cls(system, np.full(system.cells_shape, float(c)))

    @classmethod
    def from_callable(cls, system: RootSystem, fn: Callable) -> "GridFunction":
        """Sample ``fn`` at cell centres (``fn`` receives one array per axis)."""
        grids = np.meshgrid(*(system.centers(d) for d in range(system.n)), indexing="ij")
        return cls(system, fn(*grids))

    def floored(self, floor: float = WEIGHT_FLOOR) -> "GridFunction":
        return GridFunction(self.system, np.maximum(self.values, floor))

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return GridFunction(self.system, fn(self.values))

    def __pow__(self, s: float) -> "GridFunction":
        return GridFunction(self.system, self.values ** float(s))

    def __mul__(self, other) -> "GridFunction":
        if isinstance(other, GridFunction):
            self._check_mesh(other)
            return GridFunction(self.system, self.values * other.values)
        return GridFunction(self.system, self.values * float(other))

    __rmul__ = __mul__

    def _check_mesh(self, other: "GridFunction") -> None:
        if other.system != self.system:
            raise ValueError("grid functions live on different meshes")

    # -- integration --------------------------------------------------------
    @cached_property
    def cumulative(self) -> np.ndarray:
        """Prefix integrals on the cell-edge lattice, zero-padded, in extended precision."""
        g = self.values.astype(np.longdouble) * np.longdouble(self.system.cell_volume)
        for d in range(self.system.n):
            g = np.cumsum(g, axis=d)
            pad = [(0, 0)] * self.system.n
            pad[d] = (1, 0)
            g = np.pad(g, pad)
        return g

    def total(self) -> float:
        return float(self.cumulative[(-1,) * self.system.n])

    def box_integrals(self, lo: Sequence[tuple[np.ndarray, np.ndarray]],
                      hi: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        """Integrals over a product family of boxes.

        ``lo[d]`` and ``hi[d]`` are ``(cell_index, fraction)`` pairs giving
        the box endpoints along axis ``d`` in mesh coordinates relative to the
        root.  The result has shape ``(len(lo[0][0]), len(lo[1][0]), ...)``.
        The prefix integral of a cell-constant function is multilinear inside
        each cell, so interpolating it is exact.
        """
        arr = self.cumulative
        top = self.system.cells_shape
        for d in range(self.system.n):
            (il, fl), (ih, fh) = lo[d], hi[d]
            terms = (
                (il, -(1 - fl)),
                (np.minimum(il + 1, top[d]), -fl),
                (ih, 1 - fh),
                (np.minimum(ih + 1, top[d]), fh),
            )
            shape = [1] * arr.ndim
            shape[d] = -1
            acc = None
            for idx, w in terms:
                part = np.take(arr, idx, axis=d) * np.asarray(w, dtype=np.longdouble).reshape(shape)
                acc = part if acc is None else acc + part
            arr = acc
        return arr.astype(float)

    @cached_property
    def thirds(self) -> np.ndarray:
        """Values on the lattice of thirds of cells.

        Every cube of every grid down to the mesh level is a union of these
        pieces, so its integral is a plain sum with no cancellation.
        """
        v = self.values
        for d in range(self.system.n):
            v = np.repeat(v, 3, axis=d)
        return v

    def _piece_sums(self, start: Sequence[int], count: Sequence[int], width: int) -> np.ndarray:
        """Sums over a product grid of ``count`` cubes of ``width`` pieces per axis."""
        n = self.system.n
        view = self.thirds[tuple(slice(s, s + c * width) for s, c in zip(start, count))]
        shape = []
        for c in count:
            shape += [c, width]
        sums = view.reshape(shape).sum(axis=tuple(range(1, 2 * n, 2)))
        return sums * (float(self.system.h) / 3) ** n

    def block_integrals(self, block: GridBlock) -> np.ndarray:
        sysm = self.system
        # a third of a cell is 2 units
        start = [(int(block.lo_units(d)[0]) - sysm.lo_units(d)) // 2 for d in range(sysm.n)]
        return self._piece_sums(start, block.count, block.side_units // 2)

    def cube_integral(self, q: DyadicCube) -> float:
        sysm = self.system
        sysm.check_cube(q)
        if q.level > sysm.max_level:
            lo, hi = [], []
            for d in range(sysm.n):
                for end, out in ((q.lower[d], lo), (q.upper[d], hi)):
                    rel = (end - sysm.lower[d]) / sysm.h
                    i = math.floor(rel)
                    out.append((np.array([i]), np.array([float(rel - i)])))
            return float(self.box_integrals(lo, hi).reshape(-1)[0])
        start = [(sysm.to_units(a) - sysm.lo_units(d)) // 2 for d, a in enumerate(q.lower)]
        width = sysm.to_units(q.side) // 2
        return float(self._piece_sums(start, (1,) * sysm.n, width).reshape(-1)[0])


def integrate(f: GridFunction, q: DyadicCube) -> float:
    """Exact integral of the cell-constant ``f`` over the cube ``q``."""
    if not f.system.contains_cube(q):
        raise OutOfSystemError(f"{q} is not inside the root system")
    return f.cube_integral(q)


def lq_norm(f: GridFunction, mu: GridFunction | None = None, q=2) -> float:
    """``(∫ |f|^q dmu)^{1/q}``; ``mu=None`` is Lebesgue measure, ``q=inf`` the mu-essential sup."""
    qf = float(q)
    if not qf > 0:
        raise ValueError("q must be positive")
    dens = np.ones(f.system.cells_shape) if mu is None else mu.values
    if mu is not None:
        f._check_mesh(mu)
    if math.isinf(qf):
        support = dens > 0
        return float(f.values[support].max()) if support.any() else 0.0
    s = math.fsum((f.values ** qf * dens).ravel()) * f.system.cell_volume
    return s ** (1.0 / qf)


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def power_ball_integral(a: float, R: float = 1.0, n: int = 1) -> float:
    """``∫_{|x|<R} |x|^a dx = ω_{n-1} R^{n+a} / (n+a)``."""
    a = float(a)
    if a <= -n:
        raise DivergentIntegralError(f"|x|^{a} is not integrable at the origin in R^{n}")
    return sphere_measure(n) * float(R) ** (n + a) / (n + a)


def _interval_power_average(x0: np.ndarray, x1: np.ndarray, a: float) -> np.ndarray:
    """Average of |x|^a over [x0, x1) when the interval does not cross 0."""
    neg = x1 <= 0
    lo = np.where(neg, -x1, x0)
    hi = np.where(neg, -x0, x1)
    c = a + 1.0
    width = hi - lo
    out = np.empty_like(lo)
    at0 = lo <= 0
    out[at0] = hi[at0] ** c / (c * width[at0])
    pos = ~at0
    ratio = np.log(hi[pos] / lo[pos])
    out[pos] = lo[pos] ** c * np.expm1(c * ratio) / (c * width[pos])
    return out


def _unit_corner_power_integral(a: float, n: int, order: int = 12) -> float:
    """``∫_{[0,1)^n} |x|^a dx`` via self-similar peeling of the corner subcube."""
    nodes, weights = special.roots_legendre(order)
    nodes = 0.25 * (nodes + 1.0)  # [0, 1/2)
    weights = 0.25 * weights
    rest = 0.0
    for corner in itertools.product((0.0, 0.5), repeat=n):
        if not any(corner):
            continue
        pts = np.meshgrid(*([nodes + c for c in corner]), indexing="ij")
        wts = np.ones_like(pts[0])
        for g in np.meshgrid(*([weights] * n), indexing="ij"):
            wts = wts * g
        r = np.sqrt(sum(p * p for p in pts))
        rest += float(np.sum(wts * r**a))
    return rest / (1.0 - 2.0 ** (-(n + a)))


def discretize_power(a, system: RootSystem, floor: float = WEIGHT_FLOOR) -> GridFunction:
    """Cell averages of ``|x|^a`` on the mesh.

    In one dimension every average is exact.  In higher dimensions cells
    with a corner at the origin get the exact average and the other cells the
    midpoint value.
    """
    a = float(a)
    n = system.n
    if a <= -n:
        raise DivergentIntegralError(f"|x|^{a} is not locally integrable in R^{n}")
    if a == 0.0:
        return GridFunction.constant(system, 1.0)
    if n == 1:
        edges = system.cell_edges(0)
        vals = _interval_power_average(edges[:-1], edges[1:], a)
        return GridFunction(system, np.maximum(vals, floor))
    grids = np.meshgrid(*(system.centers(d) for d in range(n)), indexing="ij")
    r = np.sqrt(sum(g * g for g in grids))
    vals = r**a
    h = float(system.h)
    touching = np.ones(system.cells_shape, dtype=bool)
    for d, g in enumerate(grids):
        touching &= np.isclose(np.abs(g), h / 2, rtol=0, atol=h * 1e-9)
    if touching.any():
        vals[touching] = h**a * _unit_corner_power_integral(a, n)
    return GridFunction(system, np.maximum(vals, floor))


@dataclass(frozen=True)
class HomogeneousCore:
    """Closed-form summation of a field that is homogeneous near the origin.

    The shifted dyadic grids are invariant under dilation by 4.  If a cell
    field ``F`` satisfies ``F(x/4) = 4^{-degree} F(x)`` for ``|x|_∞ < radius``,
    its integral over the core ``|x|_∞ < radius`` equals the integral over the
    resolved annulus ``radius/4 <= |x|_∞ < radius`` divided by ``1 - ρ`` with
    ``ρ = 4^{-(degree + n)}``.  Mesh cells inside ``radius/4`` are replaced by
    this tail sum, which reaches scales far below the mesh width.
    """

    radius: Fraction
    dilation: int = field(default=4)

    def ratio(self, degree: float, n: int) -> float:
        e = float(degree) + n
        if e <= 0:
            raise DivergentIntegralError(
                f"homogeneous field of degree {degree} is not integrable at the origin in R^{n}"
            )
        return float(self.dilation) ** (-e)

    def multipliers(self, sup_norm: np.ndarray, degree: float, n: int) -> np.ndarray:
        """Integration multipliers from the sup-norm of cell (or subcell) centres."""
        r0 = float(self.radius)
        rho = self.ratio(degree, n)
        out = np.ones_like(sup_norm, dtype=float)
        out[sup_norm < r0] = 1.0 / (1.0 - rho)
        out[sup_norm < r0 / self.dilation] = 0.0
        return out

    def cell_multipliers(self, system: RootSystem, degree: float) -> np.ndarray:
        grids = np.meshgrid(*(np.abs(system.centers(d)) for d in range(system.n)), indexing="ij")
        sup = np.maximum.reduce(grids) if len(grids) > 1 else grids[0]
        if float(self.radius) < 4 * float(system.h):
            raise ValueError("core radius must span several mesh cells")
        return self.multipliers(sup, degree, system.n)

    def integral(self, field_values: np.ndarray, system: RootSystem, degree: float) -> float:
        mult = self.cell_multipliers(system, degree)
        return math.fsum((field_values * mult).ravel()) * system.cell_volume
