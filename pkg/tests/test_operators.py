import math
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharpfrac.exceptions import ConfigError, OutOfSystemError
from sharpfrac.geometry import RootSystem, cube_at
from sharpfrac.gridfn import ExponentData, GridFunction, lq_norm
from sharpfrac.harness import case_rng, random_function, random_step_weight
from sharpfrac.operators import (dyadic_weighted_maximal, multilinear_integral, multilinear_maximal,
                                 sparse_integral, sparse_integral_q)
from sharpfrac.sparse import build_sparse

import oracle
from conftest import SEED


def chi(system, a, b):
    return GridFunction.from_callable(system, lambda x: ((x >= a) & (x < b)).astype(float))


def test_maximal_indicator_m1():
    system = RootSystem.box(-2, 4, 6)
    out = multilinear_maximal([chi(system, 0, 1)], ExponentData.make(1, 0, [2]))
    inside = (system.centers(0) >= 0) & (system.centers(0) < 1)
    assert np.all(out.values[inside] == 1.0)
    assert out.at(Fr(1, 2)) == 1.0


def test_maximal_indicator_m2_alpha1():
    system = RootSystem.box(-2, 4, 6)
    f = chi(system, 0, 1)
    out = multilinear_maximal([f, f], ExponentData.make(1, 1, ["4/3", "4/3"]))
    inside = (system.centers(0) >= 0) & (system.centers(0) < 1)
    assert np.allclose(out.values[inside], 1.0, rtol=0, atol=1e-15)


def test_maximal_matches_oracle():
    system = RootSystem.box(0, 2, 3)
    rng = np.random.default_rng(4)
    vals = [[int(v) for v in rng.integers(0, 6, system.cells_shape)] for _ in range(2)]
    fs = [GridFunction(system, v) for v in vals]
    e = ExponentData.make(1, Fr(1, 2), ["4/3", "4"])
    out = multilinear_maximal(fs, e)
    steps = [oracle.Step(0, 2, v) for v in vals]
    ivs = oracle.intervals_in(Fr(0), Fr(2), -2, 3)
    for x, val in zip(oracle.all_points(Fr(0), Fr(2), system.num_cells), out.values):
        assert val == pytest.approx(oracle.maximal_at(x, steps, Fr(1, 2), ivs), rel=1e-13, abs=1e-300)


def test_maximal_dilation_covariance():
    # f(2x) on [-1,1) at level M against f on [-2,2) at level M-1, standard grid
    e = ExponentData.make(1, Fr(1, 2), [Fr(4, 3)])
    big = RootSystem.box(-2, 2, 7)
    small = RootSystem.box(-1, 1, 8)
    rng = np.random.default_rng(9)
    vals = rng.random(big.cells_shape)
    orig = multilinear_maximal([GridFunction(big, vals)], e, shifts=[0])
    scaled = multilinear_maximal([GridFunction(small, vals)], e, shifts=[0])
    assert np.allclose(scaled.values, 2.0**-0.5 * orig.values, rtol=1e-13, atol=0)


def test_mismatched_meshes():
    a, b = RootSystem.box(0, 1, 4), RootSystem.box(0, 1, 5)
    e = ExponentData.make(1, Fr(1, 2), ["4/3", "4"])
    with pytest.raises(ValueError, match="different meshes"):
        multilinear_maximal([GridFunction.constant(a), GridFunction.constant(b)], e)


def test_integral_at_midpoint():
    system = RootSystem.box(-1, 3, 8)
    e = ExponentData.make(1, Fr(1, 2), [Fr(4, 3)])
    out = multilinear_integral([chi(system, 0, 1)], e, refine_depth=3)
    # x = 1/2 sits on a cell edge; average the two neighbouring cells
    i = system.cell_of(Fr(1, 2))[0]
    value = 0.5 * (out.values[i - 1] + out.values[i])
    assert value == pytest.approx(2 * math.sqrt(2), rel=0.02)


def test_integral_mirror_symmetry_exact():
    system = RootSystem.box(0, 1, 8)
    e = ExponentData.make(1, Fr(1, 2), [Fr(4, 3)])
    out = multilinear_integral([GridFunction.constant(system)], e).values
    assert np.array_equal(out, out[::-1])


def test_integral_increases_with_depth():
    system = RootSystem.box(0, 1, 6)
    e = ExponentData.make(1, Fr(1, 2), [Fr(4, 3)])
    f = [GridFunction.constant(system)]
    vals = [multilinear_integral(f, e, refine_depth=d).values for d in (1, 2, 3, 4)]
    for a, b in zip(vals, vals[1:]):
        assert np.all(b > a)


def test_integral_bilinear_against_dense_quadrature():
    # m = 2: compare the folded evaluation with a direct double loop
    system = RootSystem.box(0, 1, 4)
    e = ExponentData.make(1, 1, ["4/3", "4/3"])
    rng = np.random.default_rng(2)
    fs = [GridFunction(system, rng.random(system.cells_shape)) for _ in range(2)]
    out = multilinear_integral(fs, e, refine_depth=1, refine_radius=0)
    h = float(system.h)
    N = system.num_cells
    # depth-1 split applies to the diagonal cell pair only (radius 0)
    offs = np.array([-0.25, 0.25])
    for i in range(N):
        total = 0.0
        for j in range(N):
            for k in range(N):
                if j == i and k == i:
                    d = np.abs(offs[:, None]) + np.abs(offs[None, :])
                    kern = (h / 2) ** 2 * ((d * h) ** (1.0 - 2)).sum()
                else:
                    kern = h**2 * ((abs(j - i) + abs(k - i)) * h) ** (1.0 - 2)
                total += fs[0].values[j] * fs[1].values[k] * kern
        assert out.values[i] == pytest.approx(total, rel=1e-12)


def test_integral_two_dimensions():
    system = RootSystem.box(-1, 1, 5, n=2)
    e = ExponentData.make(2, 1, [Fr(4, 3)])
    out = multilinear_integral([GridFunction.constant(system)], e).values
    assert np.allclose(out, out[::-1, :], rtol=1e-12)
    assert np.allclose(out, out.T, rtol=1e-12)
    # at the centre: int_{[-1,1)^2} |y|^{-1} dy = 8 asinh(1)
    c = out.shape[0] // 2
    assert out[c, c] == pytest.approx(8 * math.asinh(1), rel=0.01)


def test_integral_errors():
    system = RootSystem.box(0, 1, 4)
    f = [GridFunction.constant(system)]
    with pytest.raises(ConfigError):
        multilinear_integral(f, ExponentData.make(1, 0, [2]))
    with pytest.raises(ValueError):
        multilinear_integral(f, ExponentData.make(1, Fr(1, 2), [Fr(4, 3)]), refine_depth=0)
    sys2 = RootSystem.box(0, 1, 3, n=2)
    with pytest.raises(ConfigError, match="m\\*n"):
        multilinear_integral([GridFunction.constant(sys2)] * 2, ExponentData.make(2, 1, [2, 2]))


def test_homogeneity_and_monotonicity():
    system = RootSystem.box(-1, 1, 6)
    rng = case_rng(SEED, 10)
    e = ExponentData.make(1, Fr(1, 2), ["4/3", "4"])
    f1, f2 = random_function(system, rng), random_function(system, rng)
    big = GridFunction(system, f1.values + rng.random(system.cells_shape))
    for op in (multilinear_maximal, multilinear_integral):
        base = op([f1, f2], e).values
        assert np.allclose(op([f1 * 3.0, f2], e).values, 3 * base, rtol=1e-12)
        assert np.all(op([big, f2], e).values >= base * (1 - 1e-12))


def test_weighted_maximal_unweighted_reduction():
    system = RootSystem.box(-2, 4, 6)
    f = chi(system, 0, 1)
    one = GridFunction.constant(system)
    a = dyadic_weighted_maximal(f, one).values
    b = multilinear_maximal([f], ExponentData.make(1, 0, [2]), shifts=[0]).values
    assert np.array_equal(a, b)
    x = system.centers(0)
    assert np.all(a[x < 0] == 0)
    assert a[np.searchsorted(x, 1.5)] == 0.5 and a[np.searchsorted(x, 3.5)] == 0.25


def test_weighted_maximal_of_one():
    system = RootSystem.box(0, 1, 5)
    rng = np.random.default_rng(0)
    w = GridFunction(system, rng.random(system.cells_shape) + 0.1)
    out = dyadic_weighted_maximal(GridFunction.constant(system), w, alpha=Fr(1, 2))
    # w(Q)^{alpha/n} is largest for the root
    assert np.allclose(out.values, w.total() ** 0.5, rtol=1e-13)


def weighted_maximal_bound(p, alpha):
    """Target exponent and explicit constant; ``1/q = 1/p - alpha`` may vanish (q = inf)."""
    inv_q = 1 / Fr(p) - Fr(alpha)
    q = math.inf if inv_q == 0 else float(1 / inv_q)
    pc = float(Fr(p) / (Fr(p) - 1))
    return q, (1 + pc / q) ** (1 - float(alpha))


@pytest.mark.parametrize("p,alpha", [(2, 0), (2, Fr(1, 2)), (Fr(4, 3), Fr(1, 2))])
def test_weighted_maximal_bound_small_sample(p, alpha):
    system = RootSystem.box(0, 1, 6)
    q, const = weighted_maximal_bound(p, alpha)
    for case in range(10):
        rng = case_rng(SEED, 400 + case)
        f, w = random_function(system, rng), random_step_weight(system, rng)
        lhs = lq_norm(dyadic_weighted_maximal(f, w, alpha), w, q)
        assert lhs <= const * lq_norm(f, w, float(p))


def test_weighted_maximal_bound_constants():
    assert weighted_maximal_bound(2, 0) == (2.0, 2.0)
    assert weighted_maximal_bound(2, Fr(1, 2)) == (math.inf, 1.0)
    assert weighted_maximal_bound(Fr(4, 3), Fr(1, 2)) == (4.0, pytest.approx(math.sqrt(2)))


def test_sparse_integral_single_cube():
    system = RootSystem.box(0, 1, 5)
    e = ExponentData.make(1, Fr(1, 2), [Fr(4, 3)])
    out = sparse_integral([GridFunction.constant(system)], [cube_at(0, 0)], e)
    assert np.all(out.values == 1.0)
    with pytest.raises(OutOfSystemError):
        sparse_integral([GridFunction.constant(system)], [cube_at(1, 0)], e)


def test_sparse_q1_coincidence():
    system = RootSystem.box(-1, 1, 6)
    e = ExponentData.make(1, Fr(1, 2), ["4/3", "4"])
    rng = case_rng(SEED, 11)
    fs = [random_function(system, rng) for _ in range(2)]
    S = build_sparse(fs, e, Fr(1, 3))
    assert len(S) > 0
    assert np.array_equal(sparse_integral(fs, S, e).values, sparse_integral_q(fs, S, e, 1).values)


def test_sparse_q_form_dominated_for_q_above_one():
    # the l^q sum of nonnegative terms is at most the l^1 sum
    system = RootSystem.box(-1, 1, 6)
    e = ExponentData.make(1, Fr(1, 2), ["4/3", "4"])
    rng = case_rng(SEED, 12)
    fs = [random_function(system, rng) for _ in range(2)]
    S = build_sparse(fs, e)
    assert np.all(sparse_integral_q(fs, S, e, 2).values <= sparse_integral(fs, S, e).values * (1 + 1e-12))


def _domination_constants(level):
    e = ExponentData.make(1, Fr(1, 2), ["4/3", "4"])
    system = RootSystem.box(-1, 1, level)
    # continuous data: at a jump the quadrature itself converges slowly
    f = [GridFunction.from_callable(system, lambda x: np.maximum(0, 1 - 2 * np.abs(x + 0.25))),
         GridFunction.from_callable(system, lambda x: np.maximum(0, 1 - 2 * np.abs(x - 0.3)) ** 2)]
    M = multilinear_maximal(f, e).values
    Iv = multilinear_integral(f, e).values
    sp = sum(sparse_integral(f, build_sparse(f, e, t), e).values for t in (0, Fr(1, 3)))
    ok = Iv > 0
    return float((M[ok] / Iv[ok]).max()), float((Iv[sp > 0] / sp[sp > 0]).max())


def test_domination_constants_stable_across_meshes():
    c6, d6 = _domination_constants(6)
    c8, d8 = _domination_constants(8)
    assert abs(c8 / c6 - 1) <= 0.1
    assert abs(d8 / d6 - 1) <= 0.1


@given(st.lists(st.integers(0, 5), min_size=8, max_size=8), st.lists(st.integers(0, 5), min_size=8, max_size=8))
def test_maximal_is_monotone_property(a, b):
    system = RootSystem.box(0, 1, 3)
    e = ExponentData.make(1, 0, [2])
    lo = GridFunction(system, np.minimum(a, b))
    hi = GridFunction(system, np.maximum(a, b))
    assert np.all(multilinear_maximal([lo], e).values <= multilinear_maximal([hi], e).values)
