from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharpfrac.exceptions import ConfigError
from sharpfrac.geometry import RootSystem
from sharpfrac.gridfn import ExponentData, GridFunction, HomogeneousCore, discretize_power
from sharpfrac.harness import case_rng, random_step_weight
from sharpfrac.sharpness import extremal_family, fit_exponent
from sharpfrac.weights import (CubeFamily, WeightVector, a_infty_constant, a_infty_per_cube, a_pq_constant,
                               apq_linear_constant, dual_vector, holder_margin, muckenhoupt_ap_constant,
                               reverse_holder_check, tau, two_weight_constant)

import oracle
from conftest import SEED

E2 = ExponentData.make(1, Fr(1, 2), ["4/3", "4"])


@pytest.fixture
def system():
    return RootSystem.box(-1, 1, 6)


def blocky(system, rng, level=3):
    """Log-normal weight constant on standard cubes of the given level."""
    k = system.max_level - level
    coarse = rng.standard_normal(tuple(s // 2**k for s in system.cells_shape))
    return GridFunction(system, np.exp(np.repeat(coarse, 2**k)))


def test_trivial_weights_give_one(system):
    fam = CubeFamily(system)
    ones = [GridFunction.constant(system)] * 2
    wv = WeightVector(ones, E2)
    assert a_pq_constant(wv, fam) == 1.0
    assert two_weight_constant(wv.u, wv, fam) == pytest.approx(1.0, rel=1e-15)
    assert a_infty_constant(ones[0], fam) == pytest.approx(1.0, rel=1e-14)
    assert muckenhoupt_ap_constant(ones[0], 3, fam) == 1.0
    assert reverse_holder_check(ones[0], fam).worst_ratio == pytest.approx(1.0, rel=1e-14)
    for i in range(2):
        assert a_pq_constant(dual_vector(wv, i), fam) == pytest.approx(1.0, rel=1e-14)


def test_two_weight_scales_with_u(system):
    rng = case_rng(SEED, 1)
    fam = CubeFamily(system)
    wv = WeightVector([random_step_weight(system, rng) for _ in range(2)], E2)
    base = two_weight_constant(wv.u, wv, fam)
    assert two_weight_constant(wv.u * 2.0, wv, fam) == pytest.approx(2 ** (1 / 2) * base, rel=1e-13)


def test_linear_reduction(system):
    rng = case_rng(SEED, 2)
    fam = CubeFamily(system)
    e = ExponentData.make(1, Fr(1, 4), [2])
    w = random_step_weight(system, rng)
    assert a_pq_constant(WeightVector([w], e), fam) == pytest.approx(
        apq_linear_constant(w, 2, e.q, fam), rel=1e-12)


def test_a_infty_two_cell_hand_enumeration():
    # standard grid only: [0,1), [0,1/2), [1/2,1)
    system = RootSystem.box(0, 1, 1)
    fam = CubeFamily(system, shifts=[0])
    assert len(fam) == 3
    for a, b in [(3.0, 1.0), (5.0, 2.0), (1.0, 1.0)]:
        w = GridFunction(system, [a, b])
        # on [0,1): M = a on the left half, (a+b)/2 on the right
        hand = (a / 2 + (a + b) / 4) / ((a + b) / 2)
        assert a_infty_constant(w, fam) == pytest.approx(hand, rel=1e-14)
    assert a_infty_constant(GridFunction(system, [3.0, 1.0]), fam) == pytest.approx(1.25, rel=1e-14)


def test_a_infty_matches_oracle_with_shifts():
    system = RootSystem.box(0, 1, 3)
    rng = np.random.default_rng(11)
    vals = [int(v) for v in rng.integers(1, 9, system.cells_shape)]
    w = GridFunction(system, vals)
    mine = a_infty_constant(w, CubeFamily(system))
    ivs = oracle.intervals_in(Fr(0), Fr(1), -2, 3)
    assert mine == pytest.approx(oracle.a_infty(oracle.Step(0, 1, vals), ivs), rel=1e-12)


def test_a_infty_zero_mass_raises():
    system = RootSystem.box(0, 1, 2)
    w = GridFunction(system, [0.0, 0.0, 1.0, 1.0])
    with pytest.raises(ValueError, match="w\\(Q\\) = 0"):
        a_infty_per_cube(w, CubeFamily(system))


def test_a_infty_core_is_mesh_independent():
    # |x|^{-1/2}: the core value does not move with the mesh, while the plain
    # value creeps up towards it as the mesh resolves more of the spike
    a = -0.5
    core_vals, plain_vals = [], []
    for level in (8, 10, 12):
        system = RootSystem.box(-1, 1, level)
        w = discretize_power(a, system)
        fam = CubeFamily(system)
        core_vals.append(a_infty_constant(w, fam, HomogeneousCore(Fr(2) ** (6 - level)), a))
        plain_vals.append(a_infty_constant(w, fam))
    assert max(core_vals) / min(core_vals) - 1 < 1e-5
    assert plain_vals[0] < plain_vals[1] < plain_vals[2] < core_vals[-1]
    assert plain_vals[2] == pytest.approx(core_vals[-1], rel=0.02)


def test_constants_monotone_under_refinement(system):
    rng = case_rng(SEED, 3)
    wv = WeightVector([random_step_weight(system, rng) for _ in range(2)], E2)
    prev = [0.0] * 3
    for scan in range(1, 7):
        fam = CubeFamily(system, scan)
        cur = [a_pq_constant(wv, fam), a_infty_constant(wv.sigma[0], fam),
               muckenhoupt_ap_constant(wv.w[0], 3, fam)]
        assert all(c >= p for c, p in zip(cur, prev))
        prev = cur


def test_muckenhoupt_plateau_for_square_root():
    system = RootSystem.box(-1, 1, 12)
    w = discretize_power(0.5, system)
    vals = [muckenhoupt_ap_constant(w, 2, CubeFamily(system, L)) for L in range(4, 13, 2)]
    assert np.isfinite(vals).all()
    assert vals[-1] == pytest.approx(vals[-2], rel=1e-3)
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_class_constants_plateau():
    # a weight constant on level-3 blocks is self-similar at each block edge,
    # so deepening the scan stops changing the constants
    system = RootSystem.box(-1, 1, 9)
    rng = case_rng(SEED, 4)
    wv = WeightVector([blocky(system, rng) for _ in range(2)], E2)
    m, q = 2, float(E2.q)
    tracks = []
    for scan in (7, 8, 9):
        fam = CubeFamily(system, scan)
        row = [muckenhoupt_ap_constant(wv.u, m * q, fam)]
        row += [muckenhoupt_ap_constant(s, m * float(pc), fam) for s, pc in zip(wv.sigma, E2.p_conj)]
        tracks.append(row)
    assert np.isfinite(tracks).all()
    assert tracks[-1] == pytest.approx(tracks[-2], rel=1e-12)


def test_reverse_holder_random_and_extremal():
    system = RootSystem.box(-1, 1, 8)
    fam = CubeFamily(system)
    for case in range(5):
        res = reverse_holder_check(random_step_weight(system, case_rng(SEED, 100 + case)), fam)
        assert res.r == pytest.approx(1 + 1 / (tau(1) * res.a_infty))
        assert res.worst_ratio <= 2
    ext = extremal_family("T1", E2, Fr(1, 64))
    sigma = WeightVector.power(ext.w_degrees, E2, system).sigma[0]
    r, worst = reverse_holder_check(sigma, fam)
    assert 1 < r and worst <= 2


def test_dual_identity_on_random_vectors(system):
    fam = CubeFamily(system)
    for case in range(10):
        rng = case_rng(SEED, 200 + case)
        wv = WeightVector([random_step_weight(system, rng) for _ in range(2)], E2)
        base = a_pq_constant(wv, fam)
        for i in range(2):
            d = dual_vector(wv, i)
            assert d.exponents.q == E2.p_conj[i]
            assert a_pq_constant(d, fam) ** float(E2.q / E2.p_conj[i]) == pytest.approx(base, rel=1e-12)


def test_dual_needs_q_above_one(system):
    e = ExponentData.make(1, Fr(1, 2), ["4/3", "4/3"])  # q = 1
    wv = WeightVector([GridFunction.constant(system)] * 2, e)
    with pytest.raises(ConfigError, match="q > 1"):
        dual_vector(wv, 0)


def test_dual_shares_extremal_slope():
    system = RootSystem.box(-1, 1, 8)
    fam = CubeFamily(system)
    orig, dual = [], []
    for k in range(3, 8):
        eps = Fr(1, 2**k)
        wv = WeightVector.power(extremal_family("T1", E2, eps).w_degrees, E2, system)
        orig.append((eps, a_pq_constant(wv, fam)))
        dual.append((eps, a_pq_constant(dual_vector(wv, 0), fam) ** float(E2.q / E2.p_conj[0])))
    assert fit_exponent(orig)[0] == pytest.approx(fit_exponent(dual)[0], abs=1e-9)


def test_holder_margin_per_cube(system):
    fam = CubeFamily(system)
    for case in range(5):
        rng = case_rng(SEED, 300 + case)
        wv = WeightVector([random_step_weight(system, rng) for _ in range(2)], E2)
        assert holder_margin(wv, fam).min() >= 1 - 1e-12


def test_errors(system):
    empty = CubeFamily(system, blocks=[])
    ones = WeightVector([GridFunction.constant(system)] * 2, E2)
    with pytest.raises(ValueError, match="empty"):
        a_pq_constant(ones, empty)
    tw = ExponentData.make(1, 0, [2, 2], q=3, two_weight=True)
    with pytest.raises(ConfigError):
        a_pq_constant(WeightVector([GridFunction.constant(system)] * 2, tw), CubeFamily(system))
    with pytest.raises(ValueError):
        muckenhoupt_ap_constant(GridFunction.constant(system), 1, CubeFamily(system))


@given(logs=st.lists(st.floats(-3, 3), min_size=8, max_size=8))
def test_two_weight_reduction_property(logs):
    system = RootSystem.box(0, 1, 3)
    fam = CubeFamily(system)
    w1 = GridFunction(system, np.exp(logs))
    w2 = GridFunction(system, np.exp(logs[::-1]))
    wv = WeightVector([w1, w2], E2)
    apq = a_pq_constant(wv, fam)
    assert two_weight_constant(wv.u, wv, fam) == pytest.approx(apq ** 0.5, rel=1e-12)
    assert holder_margin(wv, fam).min() >= 1 - 1e-12
