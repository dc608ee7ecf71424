import json
import math
from fractions import Fraction as Fr

import pytest
from hypothesis import given, strategies as st

from sharpfrac.exceptions import ConfigError
from sharpfrac.gridfn import ExponentData
from sharpfrac.sharpness import (ExperimentConfig, check_hypotheses, default_eps, extremal_family, fit_exponent,
                                 mesh_norms, parse_eps, run_experiment, run_thm1_experiment,
                                 run_thm2_experiment, run_thm3_experiment)

E_T1 = ExponentData.make(1, Fr(1, 2), ["4/3", "4"])
E_T3 = ExponentData.make(1, Fr(1, 2), [2, 2])
SHORT = [Fr(1, 2**k) for k in range(3, 8)]


def fits(report):
    return {f.name: f for f in report.fits}


def test_fit_exact_power_law():
    pts = [(2.0**-k, 7 * (2.0**-k) ** -1.5) for k in range(3, 11)]
    slope, se = fit_exponent(pts)
    assert slope == pytest.approx(1.5, abs=1e-12)
    assert se < 1e-12


def test_fit_perturbed_power_law_approaches_one():
    def slope(ks):
        return fit_exponent([(2.0**-k, 2.0**k * (1 + 2.0**-k)) for k in ks])[0]

    shallow, deep = slope(range(1, 6)), slope(range(6, 11))
    assert shallow < deep < 1
    assert deep == pytest.approx(1, abs=1e-2)


def test_fit_errors():
    with pytest.raises(ValueError, match="duplicate"):
        fit_exponent([(0.5, 1.0), (0.5, 2.0), (0.25, 3.0)])
    with pytest.raises(ValueError):
        fit_exponent([(0.5, 1.0), (0.25, 2.0)])
    with pytest.raises(ValueError):
        fit_exponent([(0.5, 1.0), (0.25, 0.0), (0.125, 3.0)])


def test_parse_eps():
    assert parse_eps("2^-3..2^-10") == default_eps()
    assert parse_eps("1/2, 1/4") == [Fr(1, 2), Fr(1, 4)]
    with pytest.raises(ConfigError):
        parse_eps("1/2..1/5")


def test_hypotheses():
    check_hypotheses("T1", E_T1)
    check_hypotheses("T3", E_T3)
    check_hypotheses("T2", E_T1)
    # p = (2,2): p' = (2,2) and 2 * 1/2 < 2
    with pytest.raises(ConfigError, match="p'_"):
        check_hypotheses("T1", E_T3)
    with pytest.raises(ConfigError, match="unknown theorem"):
        check_hypotheses("T4", E_T1)
    with pytest.raises(ConfigError):
        ExperimentConfig(E_T3, "T1")
    with pytest.raises(ConfigError):
        ExperimentConfig(E_T1, "T1", eps=(Fr(1, 2), Fr(1, 2)))


def test_t2_duality_branch_unsupported():
    # p = (4,4), alpha = 1/4: q = 4 exceeds max p' = 4/3
    e = ExponentData.make(1, Fr(1, 4), [4, 4])
    with pytest.raises(ConfigError, match="unsupported branch"):
        check_hypotheses("T2", e)


def test_extremal_family_degrees():
    eps = Fr(1, 8)
    fam = extremal_family("T1", E_T1, eps)
    # slot 1 carries the singular weight: p'_1 = 4 is the largest conjugate
    assert fam.f_degrees == [eps - 1, (eps - 1) / 4]
    assert fam.w_degrees == [pytest.approx((1 - eps) / 4), 0.0]
    fam3 = extremal_family("T3", E_T3, eps)
    assert fam3.f_degrees == [eps - 1] * 2
    assert fam3.w_degrees == [pytest.approx((1 - eps) / 2)] * 2


def test_eps_one_degenerate_row():
    for th, e in (("T1", E_T1), ("T2", E_T1), ("T3", E_T3)):
        rep = run_experiment(ExperimentConfig(e, th, eps=(1,), mesh_level=7))
        assert len(rep.rows) == 1 and rep.fits == []
        assert all(math.isfinite(v) and v > 0 for v in rep.rows[0].values())


def test_mesh_norms_match_closed_form():
    cfg = ExperimentConfig(E_T1, "T1", mesh_level=10)
    system = cfg.system()
    for eps in default_eps():
        fam = extremal_family("T1", E_T1, eps)
        exact = [math.pow(2 / float(eps), 1 / float(p)) for p in E_T1.p]
        got = mesh_norms(fam, E_T1, system, cfg.core())
        assert got == pytest.approx(exact, rel=0.01)


def test_thm1_slopes():
    rep = run_thm1_experiment(ExperimentConfig(E_T1, "T1", mesh_level=10))
    f = fits(rep)
    assert [f[k].target for k in ("norm_f1", "norm_f2", "a_Pq", "lhs_norm")] == [-0.75, -0.25, -0.5, -1.5]
    assert rep.passed, [(x.name, x.exponent) for x in rep.fits]
    assert len(rep.rows) == 8


def test_thm1_pointwise_lower_bound_constant_stable():
    rep = run_thm1_experiment(ExperimentConfig(E_T1, "T1", mesh_level=10))
    c = rep.checks["pointwise_lower"]
    assert c["min"] > 0 and c["factor"] < 1.2


def test_thm3_slopes_and_saturation():
    rep = run_thm3_experiment(ExperimentConfig(E_T3, "T3", mesh_level=10))
    f = fits(rep)
    assert f["a_Pq"].target == -2 and f["lhs_norm"].target == -2.5
    assert rep.passed
    assert rep.checks["saturation"]["factor"] <= 8
    # the two-weight characteristic with u = u_w is [w]^{1/q}
    assert rep.checks["two_weight"]["max_gap"] <= 1e-12


def test_thm2_integral_slope():
    rep = run_thm2_experiment(ExperimentConfig(E_T1, "T2", mesh_level=10))
    f = fits(rep)
    assert f["lhs_norm"].passed and f["lhs_norm"].target == -1.5


def test_runner_rejects_wrong_theorem():
    with pytest.raises(ConfigError):
        run_thm1_experiment(ExperimentConfig(E_T3, "T3", eps=SHORT, mesh_level=6))


def test_slopes_stable_under_refinement():
    for th, e in (("T1", E_T1), ("T3", E_T3)):
        a, b = (fits(run_experiment(ExperimentConfig(e, th, mesh_level=lvl))) for lvl in (9, 10))
        for name in a:
            assert abs(a[name].exponent - b[name].exponent) < b[name].stderr + 0.05, name


def test_report_serialization():
    rep = run_thm1_experiment(ExperimentConfig(E_T1, "T1", eps=SHORT, mesh_level=7))
    text = rep.to_csv()
    header, *body = text.splitlines()
    assert header.split(",") == rep.columns()
    for row, line in zip(rep.rows, body):
        assert [float(v) for v in line.split(",")] == [row[c] for c in rep.columns()]
    assert "quantity,target,exponent" in text
    payload = json.loads(rep.to_json())
    assert payload["theorem"] == "T1" and len(payload["rows"]) == len(SHORT)


@given(k=st.integers(2, 9), c=st.floats(0.1, 100))
def test_fit_recovers_any_slope(k, c):
    s = k / 4
    pts = [(2.0**-j, c * 2.0 ** (j * s)) for j in range(1, 8)]
    assert fit_exponent(pts)[0] == pytest.approx(s, abs=1e-10)
