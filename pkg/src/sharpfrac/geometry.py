"""Exact dyadic cube arithmetic for the standard and the one-third shifted grids.

A cube of the grid with shift ``t`` is ``2^{-k}([0,1)^n + j + (-1)^k t)`` with
``t`` in ``{0, 1/3}^n``.  Endpoints are kept as :class:`fractions.Fraction`
with denominator dividing ``3 * 2^k`` so membership is never decided in
floating point.

Inside a :class:`RootSystem` all positions are additionally expressed as
integers in units of ``2^{-max_level} / 6``; every endpoint of every grid at
levels ``<= max_level`` and every mesh cell centre is an integer in these
units, which keeps the vectorised code exact as well.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .exceptions import InvariantViolation, OutOfSystemError

THIRD = Fraction(1, 3)

Shift = tuple[Fraction, ...]


def dyadic(k: int) -> Fraction:
    """Side length ``2^{-k}`` as an exact rational."""
    return Fraction(1, 2**k) if k >= 0 else Fraction(2 ** (-k))


def _sign(k: int) -> int:
    return 1 if k % 2 == 0 else -1


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(x)


def _point(x, n: int | None = None) -> tuple[Fraction, ...]:
    if isinstance(x, (int, float, Fraction)):
        pt = (_as_fraction(x),)
    else:
        pt = tuple(_as_fraction(v) for v in x)
    if n is not None and len(pt) == 1 and n > 1:
        pt = pt * n
    return pt


def all_shifts(n: int) -> list[Shift]:
    """The ``2^n`` shifts ``{0, 1/3}^n``, standard grid first."""
    return [tuple(s) for s in itertools.product((Fraction(0), THIRD), repeat=n)]


def standard_shift(n: int) -> Shift:
    return (Fraction(0),) * n


def as_shift(t, n: int) -> Shift:
    """Normalise a shift given as a scalar (applied to every axis) or a vector."""
    if isinstance(t, (int, float, Fraction)):
        t = (t,) * n
    shift = tuple(_as_fraction(v) for v in t)
    if len(shift) != n or any(v not in (0, THIRD) for v in shift):
        raise ValueError(f"shift must lie in {{0, 1/3}}^{n}, got {t!r}")
    return shift


def level_of_side(ell: Fraction) -> int:
    """Largest ``k`` with ``2^{-k} >= ell`` (ell > 0)."""
    ell = _as_fraction(ell)
    if ell <= 0:
        raise ValueError("side length must be positive")
    k = math.floor(-math.log2(ell))
    # guard the float estimate with exact comparisons
    while dyadic(k) < ell:
        k -= 1
    while dyadic(k + 1) >= ell:
        k += 1
    return k


@dataclass(frozen=True)
class DyadicCube:
    """Half-open cube ``2^{-level}([0,1)^n + index + (-1)^level shift)``."""

    level: int
    index: tuple[int, ...]
    shift: Shift

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(j) for j in self.index))
        object.__setattr__(self, "shift", as_shift(self.shift, len(self.index)))

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def side(self) -> Fraction:
        return dyadic(self.level)

    @property
    def volume(self) -> Fraction:
        return self.side**self.n

    @property
    def lower(self) -> tuple[Fraction, ...]:
        s, sg = self.side, _sign(self.level)
        return tuple(s * (j + sg * t) for j, t in zip(self.index, self.shift))

    @property
    def upper(self) -> tuple[Fraction, ...]:
        return tuple(a + self.side for a in self.lower)

    def contains_point(self, x) -> bool:
        pt = _point(x, self.n)
        return all(a <= v < b for a, v, b in zip(self.lower, pt, self.upper))

    def contains(self, other: "DyadicCube") -> bool:
        return all(
            a <= c and d <= b
            for a, b, c, d in zip(self.lower, self.upper, other.lower, other.upper)
        )

    def intersects(self, other: "DyadicCube") -> bool:
        return all(
            max(a, c) < min(b, d)
            for a, b, c, d in zip(self.lower, self.upper, other.lower, other.upper)
        )

    def __repr__(self) -> str:
        iv = " x ".join(f"[{a}, {b})" for a, b in zip(self.lower, self.upper))
        t = ",".join(str(v) for v in self.shift)
        return f"DyadicCube(k={self.level}, j={self.index}, t=({t}): {iv})"


def cube_at(x, k: int, t=0, n: int | None = None) -> DyadicCube:
    """The unique cube of level ``k`` in the grid with shift ``t`` containing ``x``."""
    pt = _point(x, n)
    shift = as_shift(t, len(pt))
    sg = _sign(k)
    scale = dyadic(-k)  # 2^k
    index = tuple(math.floor(scale * v - sg * s) for v, s in zip(pt, shift))
    return DyadicCube(k, index, shift)


def children(q: DyadicCube) -> list[DyadicCube]:
    """The ``2^n`` children of ``q`` in its own grid."""
    half = q.side / 2
    lo = q.lower
    out = []
    for e in itertools.product((0, 1), repeat=q.n):
        corner = tuple(a + ei * half for a, ei in zip(lo, e))
        out.append(cube_at(corner, q.level + 1, q.shift))
    return out


def parent(q: DyadicCube, system: "RootSystem | None" = None) -> DyadicCube:
    """Parent of ``q`` in its own grid; with ``system`` it must stay inside the root."""
    p = cube_at(q.lower, q.level - 1, q.shift)
    if system is not None and not system.contains_cube(p):
        raise OutOfSystemError(f"parent of {q} leaves the root system")
    return p


def covering_cube(lower, side) -> tuple[Shift, DyadicCube]:
    """Find a shifted dyadic cube containing the cube ``lower + [0, side)^n``.

    Two levels are tried, the finest one whose side is at least ``side`` and
    the one whose side lies in ``[3 side, 6 side)``, each over all ``2^n``
    shifts.  The second level always succeeds: at a fixed level the endpoints
    of the standard and the shifted grid are at least a third of the side
    apart, so an interval of a third of the side can straddle at most one of
    them.
    """
    lo = _point(lower)
    ell = _as_fraction(side)
    if ell <= 0:
        raise ValueError("cube side must be positive")
    hi = tuple(a + ell for a in lo)
    n = len(lo)
    for k in (level_of_side(ell), level_of_side(3 * ell)):
        for t in all_shifts(n):
            cand = cube_at(lo, k, t)
            if all(b <= u for b, u in zip(hi, cand.upper)):
                return t, cand
    raise InvariantViolation(
        f"no shifted dyadic cube covers [{lo}, +{ell}); the one-third covering argument failed"
    )


@dataclass(frozen=True)
class GridBlock:
    """All cubes of one grid and one level that fit inside a root system.

    The block is a product of index ranges ``jmin[d] .. jmin[d] + count[d] - 1``.
    Cubes are enumerated in C order over the axes.
    """

    shift: Shift
    level: int
    jmin: tuple[int, ...]
    count: tuple[int, ...]
    side_units: int
    offset_units: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.jmin)

    @property
    def size(self) -> int:
        return int(np.prod(self.count))

    def lo_units(self, axis: int) -> np.ndarray:
        j = np.arange(self.jmin[axis], self.jmin[axis] + self.count[axis], dtype=np.int64)
        return j * self.side_units + self.offset_units[axis]

    def hi_units(self, axis: int) -> np.ndarray:
        return self.lo_units(axis) + self.side_units

    def locate(self, units: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Block-relative index of the cube containing each position, and validity."""
        idx = (np.asarray(units, dtype=np.int64) - self.offset_units[axis]) // self.side_units
        idx = idx - self.jmin[axis]
        valid = (idx >= 0) & (idx < self.count[axis])
        return np.where(valid, idx, 0), valid

    def cube(self, flat: int) -> DyadicCube:
        multi = np.unravel_index(int(flat), self.count)
        return DyadicCube(
            self.level, tuple(j0 + int(m) for j0, m in zip(self.jmin, multi)), self.shift
        )

    def cubes(self) -> Iterator[DyadicCube]:
        for flat in range(self.size):
            yield self.cube(flat)


@dataclass(frozen=True)
class RootSystem:
    """Finite truncation of the dyadic grids: a root box and a finest mesh level.

    The root is the box ``prod_d [lo[d], lo[d] + shape[d]) * 2^{-top_level}``,
    i.e. a block of standard cubes of level ``top_level``.  A single standard
    cube is the case ``shape == (1,)*n``.  Mesh cells are the standard cubes of
    level ``max_level`` inside the root.
    """

    n: int
    top_level: int
    lo: tuple[int, ...]
    shape: tuple[int, ...]
    max_level: int

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        if len(self.lo) != self.n or len(self.shape) != self.n:
            raise ValueError("lo and shape must have length n")
        if any(s < 1 for s in self.shape):
            raise ValueError("root must contain at least one top-level cube per axis")
        if self.max_level < self.top_level:
            raise ValueError("max_level must be >= the level of the root")

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_cube(cls, root: DyadicCube, max_level: int) -> "RootSystem":
        if any(t != 0 for t in root.shift):
            raise ValueError("the root cube must belong to the standard grid")
        return cls(root.n, root.level, root.index, (1,) * root.n, max_level)

    @classmethod
    def box(cls, lo, hi, max_level: int, n: int = 1) -> "RootSystem":
        """Root ``[lo, hi)^n`` tiled by the coarsest standard cubes that fit."""
        lo, hi = _as_fraction(lo), _as_fraction(hi)
        if hi <= lo:
            raise ValueError("empty root box")
        k = level_of_side(hi - lo)
        while True:
            s = dyadic(k)
            a, b = lo / s, hi / s
            if a.denominator == 1 and b.denominator == 1:
                break
            k += 1
            if k > max_level:
                raise ValueError(f"[{lo}, {hi}) is not a union of mesh cells at level {max_level}")
        return cls(n, k, (int(a),) * n, (int(b - a),) * n, max_level)

    # -- geometry -------------------------------------------------------------
    @property
    def h(self) -> Fraction:
        return dyadic(self.max_level)

    @property
    def cell_volume(self) -> float:
        return float(self.h) ** self.n

    @property
    def cells_shape(self) -> tuple[int, ...]:
        f = 2 ** (self.max_level - self.top_level)
        return tuple(s * f for s in self.shape)

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.cells_shape))

    @property
    def base(self) -> tuple[int, ...]:
        """Mesh index of the first cell along each axis."""
        f = 2 ** (self.max_level - self.top_level)
        return tuple(v * f for v in self.lo)

    @property
    def lower(self) -> tuple[Fraction, ...]:
        s = dyadic(self.top_level)
        return tuple(v * s for v in self.lo)

    @property
    def upper(self) -> tuple[Fraction, ...]:
        s = dyadic(self.top_level)
        return tuple((v + c) * s for v, c in zip(self.lo, self.shape))

    @property
    def root_cube(self) -> DyadicCube | None:
        if all(c == 1 for c in self.shape):
            return DyadicCube(self.top_level, self.lo, standard_shift(self.n))
        return None

    @property
    def unit(self) -> Fraction:
        return self.h / 6

    def lo_units(self, axis: int) -> int:
        return 6 * self.base[axis]

    def hi_units(self, axis: int) -> int:
        return 6 * (self.base[axis] + self.cells_shape[axis])

    def to_units(self, x: Fraction) -> int:
        u = _as_fraction(x) / self.unit
        if u.denominator != 1:
            raise OutOfSystemError(f"{x} is not on the lattice of this system")
        return int(u)

    def contains_cube(self, q: DyadicCube) -> bool:
        return q.n == self.n and all(
            a >= r0 and b <= r1
            for a, b, r0, r1 in zip(q.lower, q.upper, self.lower, self.upper)
        )

    def contains_point(self, x) -> bool:
        pt = _point(x, self.n)
        return all(a <= v < b for a, v, b in zip(self.lower, pt, self.upper))

    def check_cube(self, q: DyadicCube) -> None:
        if not self.contains_cube(q):
            raise OutOfSystemError(f"{q} is not inside the root system")

    # -- mesh ---------------------------------------------------------------
    def center_units(self, axis: int) -> np.ndarray:
        i = np.arange(self.cells_shape[axis], dtype=np.int64)
        return 6 * (self.base[axis] + i) + 3

    def centers(self, axis: int) -> np.ndarray:
        return self.center_units(axis) * float(self.unit)

    def cell_edges(self, axis: int) -> np.ndarray:
        i = np.arange(self.cells_shape[axis] + 1, dtype=np.int64)
        return (self.base[axis] + i) * float(self.h)

    def subcell_center_units(self, axis: int) -> np.ndarray:
        """Centres of the thirds of cells; every grid is constant on these."""
        s = np.arange(3 * self.cells_shape[axis], dtype=np.int64)
        return self.lo_units(axis) + 2 * s + 1

    def cell_of(self, x) -> tuple[int, ...]:
        pt = _point(x, self.n)
        if not self.contains_point(pt):
            raise OutOfSystemError(f"{x} lies outside the root")
        return tuple(math.floor(v / self.h) - b for v, b in zip(pt, self.base))

    # -- cube enumeration ---------------------------------------------------
    def coarsest_level(self) -> int:
        """Coarsest level at which some grid might fit a cube inside the root."""
        ext = min(c for c in self.shape) * dyadic(self.top_level)
        return level_of_side(ext) if dyadic(level_of_side(ext)) <= ext else level_of_side(ext) + 1

    def block(self, t, k: int) -> GridBlock | None:
        if k > self.max_level:
            raise OutOfSystemError(f"level {k} is finer than the mesh level {self.max_level}")
        shift = as_shift(t, self.n)
        side = 6 * 2 ** (self.max_level - k)
        sg = _sign(k)
        offs = tuple(sg * 2 * 2 ** (self.max_level - k) * (1 if s else 0) for s in shift)
        jmin, count = [], []
        for d in range(self.n):
            a = -((-(self.lo_units(d) - offs[d])) // side)  # ceil
            b = (self.hi_units(d) - offs[d]) // side - 1
            if b < a:
                return None
            jmin.append(a)
            count.append(b - a + 1)
        return GridBlock(shift, k, tuple(jmin), tuple(count), side, offs)

    def blocks(self, shifts: Sequence | None = None, finest: int | None = None,
               coarsest: int | None = None) -> list[GridBlock]:
        """Non-empty blocks for the given shifts, coarse to fine."""
        finest = self.max_level if finest is None else finest
        coarsest = self.coarsest_level() if coarsest is None else coarsest
        shifts = all_shifts(self.n) if shifts is None else [as_shift(t, self.n) for t in shifts]
        out = []
        for k in range(coarsest, finest + 1):
            for t in shifts:
                b = self.block(t, k)
                if b is not None:
                    out.append(b)
        return out

    def cubes(self, shifts=None, finest: int | None = None) -> Iterator[DyadicCube]:
        for b in self.blocks(shifts, finest):
            yield from b.cubes()
