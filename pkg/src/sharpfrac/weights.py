"""Muckenhoupt-type weight characteristics over finite dyadic cube families.

Every supremum runs over a :class:`CubeFamily`, so reported constants are lower
bounds for the all-cubes characteristics.  Identities that hold cube by cube
(duality, two-weight reduction, Hölder) are exposed as per-cube arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .exceptions import ConfigError
from .geometry import DyadicCube, GridBlock, RootSystem
from .gridfn import WEIGHT_FLOOR, ExponentData, GridFunction, HomogeneousCore, discretize_power

_CEIL = 1e300


class CubeFamily:
    """All cubes of the chosen grids inside the root, from the coarsest level down to ``scan_level``."""

    def __init__(self, system: RootSystem, scan_level: int | None = None,
                 shifts: Sequence | None = None, coarsest: int | None = None,
                 blocks: list[GridBlock] | None = None):
        self.system = system
        self.scan_level = system.max_level if scan_level is None else scan_level
        if blocks is None:
            blocks = system.blocks(shifts, finest=self.scan_level, coarsest=coarsest)
        self.blocks = list(blocks)
        self._starts = np.cumsum([0] + [b.size for b in self.blocks])

    def __len__(self) -> int:
        return int(self._starts[-1])

    def __iter__(self):
        for b in self.blocks:
            yield from b.cubes()

    def cube(self, i: int) -> DyadicCube:
        k = int(np.searchsorted(self._starts, i, side="right")) - 1
        return self.blocks[k].cube(i - int(self._starts[k]))

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.concatenate(
            [np.full(b.size, (b.side_units * float(self.system.unit)) ** self.system.n) for b in self.blocks]
        ) if self.blocks else np.zeros(0)

    def integrals(self, f: GridFunction) -> np.ndarray:
        if f.system != self.system:
            raise ValueError("grid function and cube family live on different systems")
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([f.block_integrals(b).ravel() for b in self.blocks])

    def averages(self, f: GridFunction) -> np.ndarray:
        return self.integrals(f) / self.volumes

    def require_nonempty(self) -> None:
        if len(self) == 0:
            raise ValueError("empty cube family")


class WeightVector:
    """Weights ``w_1..w_m`` with the derived ``σ_i = w_i^{-p_i'}`` and ``u = (Π w_i)^q``."""

    def __init__(self, weights: Sequence[GridFunction], exponents: ExponentData,
                 floor: float = WEIGHT_FLOOR, sigma: Sequence[GridFunction] | None = None,
                 u: GridFunction | None = None):
        if len(weights) != exponents.m:
            raise ValueError(f"expected {exponents.m} weights, got {len(weights)}")
        system = weights[0].system
        for w in weights:
            if w.system != system:
                raise ValueError("weights live on different meshes")
        self.system = system
        self.w = [w.floored(floor) for w in weights]
        self.exponents = exponents
        # pre-materialized transforms (e.g. exact cell averages of power weights)
        if sigma is not None:
            if len(sigma) != exponents.m:
                raise ValueError("one sigma per weight is required")
            self.__dict__["sigma"] = [s.floored(floor) for s in sigma]
        if u is not None:
            self.__dict__["u"] = u.floored(floor)

    @classmethod
    def power(cls, degrees: Sequence[float], exponents: ExponentData, system: RootSystem,
              floor: float = WEIGHT_FLOOR) -> "WeightVector":
        """Weights ``|x|^{b_i}`` with σ_i and u discretized as exact cell averages of their own powers."""
        ws = [discretize_power(b, system, floor) for b in degrees]
        sig = [discretize_power(-b * float(pc), system, floor) for b, pc in zip(degrees, exponents.p_conj)]
        uu = discretize_power(float(exponents.q) * sum(degrees), system, floor)
        return cls(ws, exponents, floor, sigma=sig, u=uu)

    @cached_property
    def sigma(self) -> list[GridFunction]:
        return [
            w.map(lambda v, s=float(pc): np.minimum(v ** (-s), _CEIL))
            for w, pc in zip(self.w, self.exponents.p_conj)
        ]

    @cached_property
    def u(self) -> GridFunction:
        prod = np.ones(self.system.cells_shape)
        for w in self.w:
            prod = prod * w.values
        return GridFunction(self.system, np.minimum(prod ** float(self.exponents.q), _CEIL))


def apq_per_cube(wv: WeightVector, family: CubeFamily) -> np.ndarray:
    """``avg_Q u · Π avg_Q σ_i^{q/p_i'}`` for every cube of the family."""
    e = wv.exponents
    out = family.averages(wv.u)
    for s, pc in zip(wv.sigma, e.p_conj):
        out = out * family.averages(s) ** float(e.q / pc)
    return out


def a_pq_constant(wv: WeightVector, family: CubeFamily) -> float:
    """Multilinear ``[w]_{A_{P,q}}`` over the family (homogeneous mode)."""
    family.require_nonempty()
    if wv.exponents.two_weight:
        raise ConfigError("the A_{P,q} constant needs exponents in homogeneous mode")
    return float(apq_per_cube(wv, family).max())


def apq_linear_constant(w: GridFunction, p, q, family: CubeFamily) -> float:
    """Linear ``[w]_{A_{p,q}} = sup avg(w^q) avg(w^{-p'})^{q/p'}``."""
    family.require_nonempty()
    p, q = float(p), float(q)
    pc = p / (p - 1)
    w = w.floored()
    a = family.averages(w ** q)
    b = family.averages(w.map(lambda v: np.minimum(v ** (-pc), _CEIL)))
    return float((a * b ** (q / pc)).max())


def two_weight_per_cube(u: GridFunction, wv: WeightVector, family: CubeFamily) -> np.ndarray:
    e = wv.exponents
    inv_p = float(1 / e.p_total)
    power = float(e.alpha) / e.n + 1.0 / float(e.q) - inv_p
    out = family.volumes**power * family.averages(u) ** (1.0 / float(e.q))
    for s, pc in zip(wv.sigma, e.p_conj):
        out = out * family.averages(s) ** (1.0 / float(pc))
    return out


def two_weight_constant(u: GridFunction, wv: WeightVector, family: CubeFamily) -> float:
    """Two-weight ``[u, w]_{A_{P,q}}``."""
    family.require_nonempty()
    e = wv.exponents
    if e.p_total > e.q:
        raise ConfigError(f"two-weight constant requires p <= q, got p={e.p_total}, q={e.q}")
    return float(two_weight_per_cube(u, wv, family).max())


def muckenhoupt_ap_constant(w: GridFunction, s, family: CubeFamily) -> float:
    """``[w]_{A_s} = sup avg(w) avg(w^{-1/(s-1)})^{s-1}``."""
    s = float(s)
    if not s > 1:
        raise ValueError("A_s needs s > 1")
    family.require_nonempty()
    w = w.floored()
    dual = w.map(lambda v: np.minimum(v ** (-1.0 / (s - 1.0)), _CEIL))
    return float((family.averages(w) * family.averages(dual) ** (s - 1.0)).max())


def _axis_view(arrs: list[np.ndarray]) -> list[np.ndarray]:
    n = len(arrs)
    out = []
    for d, a in enumerate(arrs):
        shape = [1] * n
        shape[d] = -1
        out.append(a.reshape(shape))
    return out


def _outer_and(masks: list[np.ndarray]) -> np.ndarray:
    res = None
    for m in _axis_view(masks):
        res = m if res is None else res & m
    return res


def a_infty_per_cube(w: GridFunction, family: CubeFamily,
                     core: HomogeneousCore | None = None,
                     degree: float | None = None) -> np.ndarray:
    """``(1/w(Q)) ∫_Q M(w χ_Q)`` for every cube of the family.

    ``M`` is the maximal operator over the family's own cubes contained in
    ``Q``.  It is constant on the thirds of mesh cells, so the integral is
    evaluated exactly on that lattice.

    With ``core`` (and the homogeneity ``degree`` of ``w`` near the origin)
    cubes whose closure contains the origin and which cover the core on each
    side get the closed-form tail of :class:`HomogeneousCore`; smaller cubes
    at the origin are dilation copies of those and are reported as 0.
    """
    system = family.system
    n = system.n
    mass = family.integrals(w)
    avgs = [w.block_integrals(b) / (b.side_units * float(system.unit)) ** n for b in family.blocks]
    sub_units = [system.subcell_center_units(d) for d in range(n)]
    sub_vol = (2 * float(system.unit)) ** n
    mult = None
    if core is not None:
        if degree is None:
            raise ValueError("core correction needs the homogeneity degree")
        sup = np.maximum.reduce(np.meshgrid(*(np.abs(u) * float(system.unit) for u in sub_units),
                                            indexing="ij")) if n > 1 else np.abs(sub_units[0]) * float(system.unit)
        mult = core.multipliers(sup, degree, n)
        r0u = system.to_units(core.radius)

    out = np.zeros(len(family))
    for bi, qb in enumerate(family.blocks):
        q_idx, q_ok, q_lo, q_hi = [], [], [], []
        for d in range(n):
            idx, ok = qb.locate(sub_units[d], d)
            q_idx.append(idx)
            q_ok.append(ok)
            q_lo.append(qb.lo_units(d)[idx])
            q_hi.append(qb.hi_units(d)[idx])
        local = np.zeros(tuple(len(u) for u in sub_units))
        for rb, ravg in zip(family.blocks, avgs):
            if rb.level < qb.level:
                continue
            inside, r_idx = [], []
            for d in range(n):
                idx, ok = rb.locate(sub_units[d], d)
                lo = rb.lo_units(d)[idx]
                inside.append(ok & q_ok[d] & (lo >= q_lo[d]) & (lo + rb.side_units <= q_hi[d]))
                r_idx.append(idx)
            mask = _outer_and(inside)
            vals = ravg[np.ix_(*r_idx)]
            np.maximum(local, np.where(mask, vals, 0.0), out=local)
        covered = _outer_and(q_ok)
        flat = np.ravel_multi_index(np.ix_(*q_idx), qb.count) if n > 1 else q_idx[0]
        flat = np.broadcast_to(flat, local.shape)[covered]
        plain = np.bincount(flat, weights=local[covered] * sub_vol, minlength=qb.size)
        integral = plain
        if core is not None:
            corrected = np.bincount(flat, weights=(local * mult)[covered] * sub_vol, minlength=qb.size)
            touch = np.ones(qb.count, dtype=bool)
            cover = np.ones(qb.count, dtype=bool)
            for d, (lo, hi) in enumerate(zip(_axis_view([qb.lo_units(d) for d in range(n)]),
                                            _axis_view([qb.hi_units(d) for d in range(n)]))):
                touch = touch & (lo <= 0) & (hi >= 0)
                cover = cover & ((lo <= -r0u) | (lo == 0)) & ((hi >= r0u) | (hi == 0))
            touch, cover = touch.ravel(), cover.ravel()
            integral = np.where(touch, np.where(cover, corrected, 0.0), plain)
        s0 = int(family._starts[bi])
        qmass = mass[s0:s0 + qb.size]
        if np.any(qmass <= 0):
            raise ValueError("w(Q) = 0 on a scanned cube; the A_infinity ratio is undefined")
        out[s0:s0 + qb.size] = integral / qmass
    return out


def a_infty_constant(w: GridFunction, family: CubeFamily,
                     core: HomogeneousCore | None = None, degree: float | None = None) -> float:
    """Fujii–Wilson ``[w]_{A_∞} = sup_Q (1/w(Q)) ∫_Q M(w χ_Q)`` over the family."""
    family.require_nonempty()
    return float(a_infty_per_cube(w.floored(), family, core, degree).max())


@dataclass
class ReverseHolderResult:
    r: float
    worst_ratio: float
    a_infty: float
    worst_cube: DyadicCube

    def __iter__(self):
        yield self.r
        yield self.worst_ratio


def tau(n: int) -> int:
    return 2 ** (11 + n)


def reverse_holder_check(w: GridFunction, family: CubeFamily,
                         a_infty: float | None = None) -> ReverseHolderResult:
    """Sharp reverse Hölder exponent ``r = 1 + 1/(τ_n [w]_{A_∞})`` and the worst ratio.

    The ratio ``(avg_Q w^r)^{1/r} / avg_Q w`` is at most 2 for ``A_∞`` weights.
    """
    family.require_nonempty()
    w = w.floored()
    if a_infty is None:
        a_infty = a_infty_constant(w, family)
    r = 1.0 + 1.0 / (tau(w.system.n) * a_infty)
    ratios = family.averages(w**r) ** (1.0 / r) / family.averages(w)
    i = int(np.argmax(ratios))
    return ReverseHolderResult(r, float(ratios[i]), a_infty, family.cube(i))


def dual_vector(wv: WeightVector, i: int) -> WeightVector:
    """Replace slot ``i`` by ``(Π w_j)^{-1}`` and ``p_i`` by ``q'``; the target exponent becomes ``p_i'``.

    Per cube the new characteristic is the old one raised to ``p_i'/q``.
    """
    e = wv.exponents
    if e.q <= 1:
        raise ConfigError(f"duality needs q > 1 (q' undefined for q={e.q})")
    if e.two_weight:
        raise ConfigError("duality is stated for homogeneous exponents")
    prod = np.ones(wv.system.cells_shape)
    for w in wv.w:
        prod = prod * w.values
    weights = list(wv.w)
    weights[i] = GridFunction(wv.system, np.minimum(1.0 / prod, _CEIL))
    ps = list(e.p)
    ps[i] = e.q / (e.q - 1)
    new = ExponentData.make(e.n, e.alpha, ps, q=e.p_conj[i])
    # σ of the new slot is (Π w)^q = u and the new u is w_i^{-p_i'} = σ_i
    sigma = list(wv.sigma)
    sigma[i] = wv.u
    return WeightVector(weights, new, sigma=sigma, u=wv.sigma[i])


def holder_margin(wv: WeightVector, family: CubeFamily) -> np.ndarray:
    """Per-cube ``u(Q)^{1/((m-α/n)q)} Π σ_i(Q)^{1/((m-α/n)p_i')} / |Q|`` (at least 1)."""
    e = wv.exponents
    s = e.m - e.alpha / e.n
    rhs = family.integrals(wv.u) ** float(1 / (s * e.q))
    for sig, pc in zip(wv.sigma, e.p_conj):
        rhs = rhs * family.integrals(sig) ** float(1 / (s * pc))
    return rhs / family.volumes
