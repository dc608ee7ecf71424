"""Fractional maximal, fractional integral, weighted dyadic maximal and sparse operators.

Outputs are cell-constant fields: each operator is evaluated at the centre of
every mesh cell.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import signal

from .exceptions import ConfigError, OutOfSystemError
from .geometry import DyadicCube, GridBlock, RootSystem, as_shift
from .gridfn import ExponentData, GridFunction


class OperatorOutput(GridFunction):
    """An operator evaluated at the mesh cell centres."""

    def __init__(self, system: RootSystem, values, name: str = ""):
        super().__init__(system, values)
        self.name = name

    def at(self, x) -> float:
        return float(self.values[self.system.cell_of(x)])


def _common_system(fs: Sequence[GridFunction]) -> RootSystem:
    system = fs[0].system
    for f in fs[1:]:
        if f.system != system:
            raise ValueError("input functions live on different meshes")
    return system


def block_quantities(fs: Sequence[GridFunction], alpha, block: GridBlock) -> np.ndarray:
    """``Π_i |Q|^{α/(mn) - 1} ∫_Q f_i`` for every cube of the block."""
    system = fs[0].system
    m, n = len(fs), system.n
    vol = (block.side_units * float(system.unit)) ** n
    scale = vol ** (float(alpha) / (m * n) - 1.0)
    out = np.ones(block.count)
    for f in fs:
        out = out * (f.block_integrals(block) * scale)
    return out


def sup_over_blocks(blocks: Sequence[GridBlock], values: Sequence[np.ndarray],
                    units: Sequence[np.ndarray]) -> np.ndarray:
    """Pointwise max of block-constant fields on the product lattice ``units``.

    Points outside a block do not see that block.
    """
    shape = tuple(len(u) for u in units)
    out = np.zeros(shape)
    for b, v in zip(blocks, values):
        idx, ok = [], []
        for d, u in enumerate(units):
            i, valid = b.locate(u, d)
            idx.append(i)
            ok.append(valid)
        vals = v[np.ix_(*idx)]
        mask = ok[0]
        for d in range(1, len(units)):
            mask = np.multiply.outer(mask, ok[d])
        np.maximum(out, np.where(mask, vals, 0.0), out=out)
    return out


def _center_units(system: RootSystem) -> list[np.ndarray]:
    return [system.center_units(d) for d in range(system.n)]


def multilinear_maximal(fs: Sequence[GridFunction], exps: ExponentData,
                        shifts: Sequence | None = None) -> OperatorOutput:
    """``𝓜_α`` over the shifted dyadic grids inside the root.

    By the one-third covering this is comparable with the sup over all cubes;
    the comparison factor is at most ``6^{mn - α}``.
    """
    system = _common_system(fs)
    if len(fs) != exps.m:
        raise ValueError(f"expected {exps.m} functions, got {len(fs)}")
    if not 0 <= exps.alpha < exps.m * exps.n:
        raise ConfigError(f"alpha must lie in [0, mn), got {exps.alpha}")
    blocks = system.blocks(shifts)
    vals = [block_quantities(fs, exps.alpha, b) for b in blocks]
    return OperatorOutput(system, sup_over_blocks(blocks, vals, _center_units(system)), "maximal")


def dyadic_weighted_maximal(f: GridFunction, w: GridFunction, alpha=0, t=0) -> OperatorOutput:
    """``M^𝒟_{α,w} f = sup_{Q∋x} w(Q)^{α/n - 1} ∫_Q f w`` over one grid."""
    system = _common_system([f, w])
    n = system.n
    alpha = float(alpha)
    if not 0 <= alpha < n:
        raise ConfigError(f"alpha must lie in [0, n), got {alpha}")
    fw = f * w
    blocks = system.blocks([as_shift(t, n)])
    vals = []
    for b in blocks:
        num = fw.block_integrals(b)
        den = w.block_integrals(b)
        if np.any((den <= 0) & (num > 0)):
            raise ValueError("w(Q) = 0 on a cube where f w has positive mass")
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(den > 0, num * den ** (alpha / n - 1.0), 0.0)
        vals.append(v)
    return OperatorOutput(system, sup_over_blocks(blocks, vals, _center_units(system)), "weighted maximal")


# -- fractional integral ----------------------------------------------------

def _subcell_offsets(s: int, depth: int) -> np.ndarray:
    """Midpoints (in cell widths) of the ``2^depth`` pieces of the cell at offset ``s``."""
    k = 2**depth
    return s - 0.5 + (np.arange(k) + 0.5) / k


def _kernel_table(alpha: float, m: int, n: int, size: int, h: float,
                  depth: int, radius: int) -> np.ndarray:
    """Folded kernel integrals indexed by the absolute cell offsets of the ``m·n`` coordinates.

    For ``m = 1`` the axes are the ``n`` coordinates of ``y - x``; for
    ``m = 2, n = 1`` they are ``|y_1 - x|`` and ``|y_2 - x|``.
    """
    dims = m * n
    power = alpha - dims
    grids = np.meshgrid(*([np.arange(size, dtype=float)] * dims), indexing="ij")
    if m == 1:
        dist = np.sqrt(sum(g * g for g in grids))
    else:
        dist = sum(grids)
    with np.errstate(divide="ignore"):
        table = h**dims * (dist * h) ** power
    near = np.argwhere(np.all(np.stack(grids) <= radius, axis=0))
    for offs in near:
        pts = np.meshgrid(*(_subcell_offsets(int(s), depth) for s in offs), indexing="ij")
        if m == 1:
            d = np.sqrt(sum(p * p for p in pts))
        else:
            d = sum(np.abs(p) for p in pts)
        table[tuple(offs)] = (h / 2**depth) ** dims * math.fsum(((d * h) ** power).ravel())
    return table


def _mirror(table: np.ndarray) -> np.ndarray:
    for ax in range(table.ndim):
        rev = np.flip(np.take(table, np.arange(1, table.shape[ax]), axis=ax), axis=ax)
        table = np.concatenate([rev, table], axis=ax)
    return table


def multilinear_integral(fs: Sequence[GridFunction], exps: ExponentData,
                         refine_depth: int = 3, refine_radius: int = 2) -> OperatorOutput:
    """``𝓘_α`` at cell centres by midpoint quadrature over cells.

    Cells whose offsets from the evaluation cell are all within
    ``refine_radius`` are split into ``2^refine_depth`` pieces per axis.  The
    kernel is convex along every ray so the result increases with
    ``refine_depth``.  Supported: ``m = 1`` with ``n <= 2``, and ``m = 2, n = 1``.
    """
    system = _common_system(fs)
    m, n = len(fs), system.n
    alpha = float(exps.alpha)
    if not 0 < alpha < m * n:
        raise ConfigError(f"the fractional integral needs 0 < alpha < mn, got {exps.alpha}")
    if m * n > 2:
        raise ConfigError("quadrature is implemented for m*n <= 2 only")
    if refine_depth < 1:
        raise ValueError("refine_depth must be at least 1 (the centre cell is singular)")
    h = float(system.h)
    shape = system.cells_shape
    size = max(shape)
    table = _kernel_table(alpha, m, n, size, h, refine_depth, refine_radius)

    if m == 1 and n == 1:
        # exactly rounded row sums keep mirror symmetry bitwise
        f = fs[0].values
        N = shape[0]
        a = np.arange(N)
        rows = f[None, :] * table[np.abs(a[None, :] - a[:, None])]
        out = np.array([math.fsum(r) for r in rows])
    elif m == 1:
        f = fs[0].values
        full = signal.convolve(f, _mirror(table[: shape[0], : shape[1]]), mode="full", method="direct")
        out = full[shape[0] - 1: 2 * shape[0] - 1, shape[1] - 1: 2 * shape[1] - 1]
    else:
        N = shape[0]
        c = np.arange(N)[:, None]
        s = np.arange(N)[None, :]
        folded = []
        for f in fs:
            fp = np.pad(f.values, N)
            F = fp[N + c + s] + fp[N + c - s]
            F[:, 0] = f.values
            folded.append(F)
        out = ((folded[0] @ table) * folded[1]).sum(axis=1)
    return OperatorOutput(system, np.maximum(out, 0.0), "fractional integral")


# -- sparse operators -------------------------------------------------------

def _sparse_terms(fs: Sequence[GridFunction], cubes: Sequence[DyadicCube], alpha) -> np.ndarray:
    system = _common_system(fs)
    m, n = len(fs), system.n
    out = np.empty(len(cubes))
    for i, q in enumerate(cubes):
        if not system.contains_cube(q):
            raise OutOfSystemError(f"sparse cube {q} is not inside the root")
        v = float(q.volume) ** (float(alpha) / n - m)
        for f in fs:
            v *= f.cube_integral(q)
        out[i] = v
    return out


def _cube_cell_slices(system: RootSystem, q: DyadicCube) -> tuple[slice, ...]:
    """Cells whose centres lie in ``q``."""
    out = []
    for d in range(system.n):
        lo = system.to_units(q.lower[d]) - system.lo_units(d)
        hi = system.to_units(q.upper[d]) - system.lo_units(d)
        # centre of cell i sits at 6 i + 3
        out.append(slice(max(0, -((-(lo - 3)) // 6)), max(0, -((-(hi - 3)) // 6))))
    return tuple(out)


def _cubes_of(family) -> list[DyadicCube]:
    return list(family.cubes) if hasattr(family, "cubes") else list(family)


def sparse_integral(fs: Sequence[GridFunction], family, exps: ExponentData) -> OperatorOutput:
    """``Σ_{Q∈S} |Q|^{α/n - m} Π_i ∫_Q f_i · χ_Q`` at cell centres."""
    system = _common_system(fs)
    cubes = _cubes_of(family)
    acc = np.zeros(system.cells_shape)
    for cube, v in zip(cubes, _sparse_terms(fs, cubes, exps.alpha)):
        acc[_cube_cell_slices(system, cube)] += v
    return OperatorOutput(system, acc, "sparse")


def sparse_integral_q(fs: Sequence[GridFunction], family, exps: ExponentData, q) -> OperatorOutput:
    """``(Σ_{Q∈S} (|Q|^{α/n - m} Π_i ∫_Q f_i)^q χ_Q)^{1/q}`` at cell centres."""
    system = _common_system(fs)
    q = float(q)
    if q <= 0:
        raise ValueError("q must be positive")
    cubes = _cubes_of(family)
    terms = _sparse_terms(fs, cubes, exps.alpha) ** q
    acc = np.zeros(system.cells_shape)
    for cube, v in zip(cubes, terms):
        acc[_cube_cell_slices(system, cube)] += v
    return OperatorOutput(system, acc ** (1.0 / q), "sparse")
