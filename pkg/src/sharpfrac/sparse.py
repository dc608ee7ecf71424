"""Stopping-time sparse families, their verification, and the Carleson embedding.

A family lives on one grid ``t``.  Its cells are the finest cubes of that grid
inside the root (for ``t = 0`` these are the mesh cells); every cube of the
grid is a union of cells, so the sets Γ_k = Ω_k and E(Q) are exact boolean
masks and all measure comparisons are integer cell counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .exceptions import InvariantViolation
from .geometry import DyadicCube, GridBlock, RootSystem, as_shift
from .gridfn import ExponentData, GridFunction
from .operators import block_quantities, sup_over_blocks


def stopping_ratio(exps: ExponentData) -> float:
    """``a = 2^{(m - α/n)(n + 1)}``."""
    return 2.0 ** float((exps.m - exps.alpha / exps.n) * (exps.n + 1))


def _cell_block(system: RootSystem, t) -> GridBlock:
    b = system.block(t, system.max_level)
    if b is None:
        raise ValueError("no cube of this grid at the mesh level fits in the root")
    return b


@dataclass
class SparseFamily:
    """Stages ``k -> [Q_{j,k}]`` on one grid, with the E(Q) cell masks.

    ``cubes`` lists the cubes stage by stage; ``stage_of[i]`` is the stage of
    ``cubes[i]`` and ``E[i]`` is a boolean mask over the cells of that cube.
    """

    system: RootSystem
    shift: tuple
    stages: dict[int, list[DyadicCube]]
    a: float = 0.0
    cells: GridBlock = field(init=False, repr=False)
    cubes: list[DyadicCube] = field(init=False, repr=False)
    stage_of: list[int] = field(init=False, repr=False)
    E: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        self.shift = as_shift(self.shift, self.system.n)
        self.stages = {int(k): sorted(v, key=lambda q: q.index) for k, v in sorted(self.stages.items()) if v}
        self.cells = _cell_block(self.system, self.shift)
        self.cubes, self.stage_of = [], []
        for k, cubes in self.stages.items():
            for q in cubes:
                if q.shift != self.shift:
                    raise ValueError(f"{q} is not on the grid of the family")
                self.system.check_cube(q)
                self.cubes.append(q)
                self.stage_of.append(k)
        self.E = []
        for i, q in enumerate(self.cubes):
            nxt = self.gamma(self.stage_of[i] + 1)
            self.E.append(~nxt[self.cell_slices(q)])

    def __len__(self) -> int:
        return len(self.cubes)

    def cell_slices(self, q: DyadicCube) -> tuple[slice, ...]:
        """Cells of the family that make up ``q``."""
        b = self.cells
        out = []
        for d in range(self.system.n):
            lo = int((q.lower[d] - b.lo_units(d)[0] * self.system.unit) / (b.side_units * self.system.unit))
            width = 2 ** (b.level - q.level)
            out.append(slice(lo, lo + width))
        return tuple(out)

    def cell_count(self, q: DyadicCube) -> int:
        return 2 ** ((self.cells.level - q.level) * self.system.n)

    def gamma(self, k: int) -> np.ndarray:
        """Mask of Γ_k, the union of the stage-``k`` cubes."""
        mask = np.zeros(self.cells.count, dtype=bool)
        for q in self.stages.get(k, []):
            mask[self.cell_slices(q)] = True
        return mask

    def cell_integrals(self, f: GridFunction) -> np.ndarray:
        return f.block_integrals(self.cells)

    def E_measure(self, f: GridFunction) -> np.ndarray:
        """``f(E(Q))`` for every cube."""
        ints = self.cell_integrals(f)
        return np.array([ints[self.cell_slices(q)][e].sum() for q, e in zip(self.cubes, self.E)])


def _threshold(a: float, k: int) -> float:
    return a ** k


def _last_below(a: float, value: float) -> int:
    """Largest ``k`` with ``a^k < value``."""
    k = math.floor(math.log(value) / math.log(a))
    while _threshold(a, k) >= value:
        k -= 1
    while _threshold(a, k + 1) < value:
        k += 1
    return k


def _first_at_least(a: float, value: float) -> int:
    """Smallest ``k`` with ``a^k >= value``."""
    return _last_below(a, value) + 1


@dataclass
class _Scan:
    blocks: list[GridBlock]
    quantity: list[np.ndarray]
    ancestor_max: list[np.ndarray]
    has_parent: list[np.ndarray]


def _scan(fs: Sequence[GridFunction], exps: ExponentData, t) -> _Scan:
    system = fs[0].system
    blocks = system.blocks([as_shift(t, system.n)])
    quantity = [block_quantities(fs, exps.alpha, b) for b in blocks]
    anc, parented = [], []
    for i, b in enumerate(blocks):
        if i == 0 or blocks[i - 1].level != b.level - 1:
            anc.append(np.zeros(b.count))
            parented.append(np.zeros(b.count, dtype=bool))
            continue
        pb = blocks[i - 1]
        idx, ok = [], []
        for d in range(system.n):
            j, v = pb.locate(b.lo_units(d), d)
            idx.append(j)
            ok.append(v)
        mask = ok[0]
        for d in range(1, system.n):
            mask = np.multiply.outer(mask, ok[d])
        up = np.maximum(quantity[i - 1], anc[i - 1])[np.ix_(*idx)]
        anc.append(np.where(mask, up, 0.0))
        parented.append(np.broadcast_to(mask, b.count))
    return _Scan(blocks, quantity, anc, parented)


def build_sparse(fs: Sequence[GridFunction], exps: ExponentData, t=0) -> SparseFamily:
    """Stopping-time family of grid ``t``.

    Stage ``k`` holds the maximal cubes of ``Ω_k = {M^𝒟_α f⃗ > a^k}``.  Stages
    run from the first ``k`` at which every root-level cube satisfies the upper
    selection bound to the last nonempty ``Ω_k``.
    """
    system = fs[0].system
    for f in fs[1:]:
        if f.system != system:
            raise ValueError("input functions live on different meshes")
    a = stopping_ratio(exps)
    scan = _scan(fs, exps, t)
    qmax = max(float(q.max()) for q in scan.quantity)
    if qmax <= 0:
        return SparseFamily(system, as_shift(t, system.n), {}, a)
    top = max(float(q[~p].max(initial=0.0)) for q, p in zip(scan.quantity, scan.has_parent))
    bound = 2.0 ** float(exps.m * exps.n - exps.alpha)
    k_min = _first_at_least(a, top / bound) if top > 0 else _last_below(a, qmax)
    k_max = _last_below(a, qmax)
    stages: dict[int, list[DyadicCube]] = {}
    for b, qv, anc in zip(scan.blocks, scan.quantity, scan.ancestor_max):
        for flat in np.flatnonzero(qv.ravel() > 0):
            val, up = float(qv.flat[flat]), float(anc.flat[flat])
            lo = k_min if up <= 0 else max(k_min, _first_at_least(a, up))
            hi = min(k_max, _last_below(a, val))
            for k in range(lo, hi + 1):
                stages.setdefault(k, []).append(b.cube(int(flat)))
    return SparseFamily(system, as_shift(t, system.n), stages, a)


# -- verification -----------------------------------------------------------

@dataclass
class SparseReport:
    valid: bool
    invariant: str | None = None
    cube: DyadicCube | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.valid


def verify_sparse(S: SparseFamily) -> SparseReport:
    """Check disjointness per stage, nesting, density and the E(Q) sets on cell masks."""
    stages = sorted(S.stages)
    gammas = {k: S.gamma(k) for k in stages}
    for k in stages:
        cover = np.zeros(S.cells.count, dtype=np.int64)
        for q in S.stages[k]:
            sl = S.cell_slices(q)
            if cover[sl].any():
                return SparseReport(False, "disjointness", q, f"overlaps another cube of stage {k}")
            cover[sl] += 1
    for k in stages:
        nxt = gammas.get(k + 1)
        if nxt is None:
            continue
        outside = nxt & ~gammas[k]
        if outside.any():
            bad = next(q for q in S.stages[k + 1] if outside[S.cell_slices(q)].any())
            return SparseReport(False, "nesting", bad, f"stage {k + 1} leaves Γ_{k}")
        for q in S.stages[k]:
            covered = int(nxt[S.cell_slices(q)].sum())
            if 2 * covered > S.cell_count(q):
                return SparseReport(False, "density", q,
                                    f"|Γ_{k + 1} ∩ Q| = {covered}/{S.cell_count(q)} cells exceeds one half")
    owner = np.zeros(S.cells.count, dtype=np.int64)
    for q, e in zip(S.cubes, S.E):
        if 2 * int(e.sum()) < S.cell_count(q):
            return SparseReport(False, "E-measure", q, "|E(Q)| < |Q|/2")
        sl = S.cell_slices(q)
        if (owner[sl][e] > 0).any():
            return SparseReport(False, "E-disjointness", q, "E(Q) meets another E set")
        owner[sl] += e
    return SparseReport(True)


def selection_check(fs: Sequence[GridFunction], exps: ExponentData, S: SparseFamily) -> SparseReport:
    """``a^k < Π|Q|^{α/(mn)-1}∫_Q f_i <= 2^{mn-α} a^k`` for every selected cube."""
    bound = 2.0 ** float(exps.m * exps.n - exps.alpha)
    m, n = len(fs), S.system.n
    for q, k in zip(S.cubes, S.stage_of):
        scale = float(q.volume) ** (float(exps.alpha) / (m * n) - 1.0)
        v = 1.0
        for f in fs:
            v *= f.cube_integral(q) * scale
        lo = _threshold(S.a, k)
        if not (lo < v <= bound * lo):
            return SparseReport(False, "selection", q, f"quantity {v!r} outside ({lo!r}, {bound * lo!r}]")
    return SparseReport(True)


def dyadic_maximal_cells(fs: Sequence[GridFunction], exps: ExponentData, S: SparseFamily) -> np.ndarray:
    """``M^𝒟_α f⃗`` of the family's grid on the family's cells."""
    system = S.system
    blocks = system.blocks([S.shift])
    vals = [block_quantities(fs, exps.alpha, b) for b in blocks]
    centres = [S.cells.lo_units(d) + S.cells.side_units // 2 for d in range(system.n)]
    return sup_over_blocks(blocks, vals, centres)


def sparse_domination_check(fs: Sequence[GridFunction], exps: ExponentData, u: GridFunction,
                            t=0, S: SparseFamily | None = None) -> float:
    """Ratio ``∫_{Ω} (M^𝒟_α f⃗)^q u / (a^q Σ (stopping quantity)^q u(E(Q)))``.

    ``Ω`` is the first stage set of the family; outside it the family says
    nothing.  The ratio is at most 1 and 0 for vanishing input.
    """
    if S is None:
        S = build_sparse(fs, exps, t)
    if len(S) == 0:
        return 0.0
    q = float(exps.q)
    M = dyadic_maximal_cells(fs, exps, S)
    omega = S.gamma(min(S.stages))
    ucells = S.cell_integrals(u)
    lhs = math.fsum((M[omega] ** q * ucells[omega]).ravel())
    m, n = len(fs), S.system.n
    uE = S.E_measure(u)
    terms = []
    for cube, ue in zip(S.cubes, uE):
        scale = float(cube.volume) ** (float(exps.alpha) / (m * n) - 1.0)
        v = 1.0
        for f in fs:
            v *= f.cube_integral(cube) * scale
        terms.append(v**q * ue)
    rhs = S.a**q * math.fsum(terms)
    if rhs == 0:
        return 0.0 if lhs == 0 else math.inf
    return lhs / rhs


# -- serialization ----------------------------------------------------------

def _fmt_shift(t: tuple) -> str:
    return ",".join(str(Fraction(v)) for v in t)


def dumps(S: SparseFamily) -> str:
    """One cube per line as ``t k j1 .. jn``, grouped under ``# stage`` markers.

    ``k`` is the dyadic level; the stopping stage is carried by the marker
    lines so the family round-trips exactly.
    """
    lines = [f"# a {S.a!r}"]
    for stage, cubes in S.stages.items():
        lines.append(f"# stage {stage}")
        for q in sorted(cubes, key=lambda c: (c.level, c.index)):
            lines.append(" ".join([_fmt_shift(q.shift), str(q.level), *map(str, q.index)]))
    return "\n".join(lines) + "\n"


def parse_cubes(text: str) -> list[tuple[int | None, DyadicCube]]:
    """``(stage, cube)`` pairs; ``stage`` is None before any marker."""
    out = []
    stage = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "stage":
                stage = int(parts[1])
            continue
        tok = line.split()
        shift = tuple(Fraction(v) for v in tok[0].split(","))
        out.append((stage, DyadicCube(int(tok[1]), tuple(int(v) for v in tok[2:]), shift)))
    return out


def loads(text: str, system: RootSystem) -> SparseFamily:
    a = 0.0
    for raw in text.splitlines():
        parts = raw.strip().lstrip("#").split()
        if raw.startswith("#") and len(parts) == 2 and parts[0] == "a":
            a = float(parts[1])
    pairs = parse_cubes(text)
    if not pairs:
        raise ValueError("no cubes in sparse family text")
    stages: dict[int, list[DyadicCube]] = {}
    for stage, q in pairs:
        stages.setdefault(0 if stage is None else stage, []).append(q)
    return SparseFamily(system, pairs[0][1].shift, stages, a)


# -- Carleson sequences -----------------------------------------------------

@dataclass
class CarlesonSequence:
    entries: Mapping[DyadicCube, float]
    mu: GridFunction

    def __post_init__(self):
        if any(v < 0 for v in self.entries.values()):
            raise ValueError("Carleson coefficients must be nonnegative")
        shifts = {q.shift for q in self.entries}
        if len(shifts) > 1:
            raise ValueError("a Carleson sequence lives on a single grid")

    def constant(self) -> float:
        """``sup_R (1/μ(R)) Σ_{Q⊆R} c_Q`` over the grid cubes inside the root."""
        if not self.entries:
            return 0.0
        system = self.mu.system
        t = next(iter(self.entries)).shift
        finest = max(q.level for q in self.entries)
        best = 0.0
        for b in system.blocks([t], finest=finest):
            sums = np.zeros(b.count)
            for q, c in self.entries.items():
                if q.level < b.level:
                    continue
                idx = []
                for d in range(system.n):
                    j, ok = b.locate(np.array([system.to_units(q.lower[d])]), d)
                    if not ok[0]:
                        break
                    idx.append(int(j[0]))
                else:
                    sums[tuple(idx)] += c
            mu = self.mu.block_integrals(b)
            pos = sums > 0
            if np.any(pos & (mu <= 0)):
                return math.inf
            if pos.any():
                best = max(best, float((sums[pos] / mu[pos]).max()))
        return best


def sequence_maximal_subcells(a: Mapping[DyadicCube, float], system: RootSystem) -> np.ndarray:
    """``sup_{Q∋x} |a_Q|`` on the lattice of thirds of cells, where it is constant."""
    units = [system.subcell_center_units(d) for d in range(system.n)]
    out = np.zeros(tuple(len(u) for u in units))
    for q, v in a.items():
        system.check_cube(q)
        masks = []
        for d, u in enumerate(units):
            lo, hi = system.to_units(q.lower[d]), system.to_units(q.upper[d])
            masks.append((u >= lo) & (u < hi))
        mask = masks[0]
        for mk in masks[1:]:
            mask = np.multiply.outer(mask, mk)
        np.maximum(out, np.where(mask, abs(v), 0.0), out=out)
    return out


def carleson_embedding_check(a: Mapping[DyadicCube, float], c: CarlesonSequence, r: float,
                             strict: bool = True) -> tuple[float, float, float]:
    """``(𝒞, Σ|a_Q|^r c_Q, ∫(M^𝒟 a)^r dμ)``; raises if ``lhs > 𝒞·rhs``."""
    if r <= 0:
        raise ValueError("r must be positive")
    system = c.mu.system
    C = c.constant()
    lhs = math.fsum(abs(a.get(q, 0.0)) ** r * v for q, v in c.entries.items())
    M = sequence_maximal_subcells(a, system)
    # each third of a cell carries 3^{-n} of the cell's mass
    sub = c.mu.values
    for d in range(system.n):
        sub = np.repeat(sub, 3, axis=d)
    rhs = math.fsum((M**r * sub).ravel()) * system.cell_volume / 3**system.n
    if strict and not math.isinf(C) and lhs > C * rhs:
        raise InvariantViolation(f"Carleson embedding fails: {lhs!r} > {C!r} * {rhs!r}")
    return C, lhs, rhs
