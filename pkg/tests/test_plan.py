from __future__ import annotations

import json
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcplab import build_plan, universe_bound
from bcplab.errors import CapacityError, ValidationError
from bcplab.plan import (ParamPlan, check_gamma_inequalities, choose_i_and_alpha,
                         compute_sample_sizes, compute_x2, epsilon_bound, gamma_inequality_sides,
                         master_inequality, stage_thresholds_after_f, stage_thresholds_after_g,
                         subsample_size)

mpmath.mp.dps = 40


def mp_epsilon(delta, T, gamma):
    """High-precision oracle written straight from the gap definition."""
    d, T, g = mpmath.mpf(delta), mpmath.mpf(T), mpmath.mpf(gamma)
    q = (1 - g) / (1 + 4 * g) * (d / T + 1 - d)
    r = (1 + g) / (1 - 4 * g) * (d / (2 * T) + 1 - d)
    return 1 - mpmath.log(q * q) / mpmath.log(q * r)


def test_epsilon_matches_high_precision_oracle():
    for delta, T, gamma in [(0.5, 4, 0.0), (0.5, 8, 0.0), (0.3, 2, 0.005), (0.9, 3, 0.01)]:
        assert epsilon_bound(delta, T, gamma) == pytest.approx(float(mp_epsilon(delta, T, gamma)),
                                                               rel=1e-12)
    assert epsilon_bound(0.5, 4, 0) == pytest.approx(0.100788, abs=1e-6)
    assert epsilon_bound(0.5, 8, 0) == pytest.approx(0.047321, abs=1e-6)


def test_epsilon_rejects_gamma_at_ceiling():
    with pytest.raises(ValidationError):
        epsilon_bound(0.5, 4, 0.5 / 80)


def test_stage_thresholds_examples():
    assert stage_thresholds_after_g(0.5, 4) == pytest.approx((0.625, 0.5625 / 1.0625), rel=1e-15)
    assert stage_thresholds_after_g(1, 1) == pytest.approx((1.0, 1 / 3))
    assert stage_thresholds_after_f(0.5, 4, 0, 0) == pytest.approx(stage_thresholds_after_g(0.5, 4))
    j1s, _ = stage_thresholds_after_f(0.5, 4, 1, 0)
    assert j1s == pytest.approx(0.625 ** 2, rel=1e-15)


def test_choose_i_and_alpha_example():
    i, alpha = choose_i_and_alpha(0.5, 4, 0.0, 0.3)
    assert i == 1 and alpha == pytest.approx(0.3 / 0.390625, rel=1e-12)
    # j1 above j1d needs no squaring
    assert choose_i_and_alpha(0.5, 4, 0.0, 0.7) == (0, pytest.approx(0.7 / 0.625))


def test_compute_x2_is_exact():
    assert compute_x2(0.5, 4, 10) == 45
    assert compute_x2(0.3, 2, 3) == Fraction(3, 2) + Fraction(6 * 7, 3)


def test_subsample_size_example():
    assert subsample_size(1024, 0.1, 0.5) == math.ceil(30 * math.log(1024) / 0.0025) == 83178
    with pytest.raises(ValidationError):
        subsample_size(1, 0.1, 0.5)


def test_sample_sizes_follow_gamma_squared_law():
    x2 = compute_x2(0.5, 4, 16)
    a = compute_sample_sizes(0.01, 2, x2, 192, 1024, None)
    b = compute_sample_sizes(0.02, 2, x2, 192, 1024, None)
    for j, (sa, sb) in enumerate(zip(a, b), start=1):
        want = 4 * (0.98 / 0.99) ** (2 ** j)
        assert sa / sb == pytest.approx(want, rel=1e-6)


def test_sample_sizes_oracle_and_loose_rule():
    x2, d, n, g = Fraction(45), 140, 64, 0.05
    got = compute_sample_sizes(g, 2, x2, d, n, None)
    loose = compute_sample_sizes(g, 2, x2, d, n, None, loose=True)
    for j in (1, 2):
        k = 2 ** j
        exact = mpmath.mpf(30) * mpmath.log(n) * (mpmath.mpf(d) / 45) ** k
        assert got[j - 1] == int(mpmath.ceil(exact / (mpmath.mpf(g) ** 2 * (1 - mpmath.mpf(g)) ** k)))
        assert loose[j - 1] <= got[j - 1]


def test_sample_cap_raises_naming_round():
    with pytest.raises(CapacityError, match="s_2"):
        compute_sample_sizes(0.01, 2, compute_x2(0.5, 4, 16), 192, 1024, cap=20_000_000)


def test_master_inequality_example():
    lhs, rhs = master_inequality(3, 0.06)
    assert lhs == pytest.approx(1.06 ** 8, rel=1e-14) and rhs == pytest.approx(1.72)
    assert lhs <= rhs
    # the master inequality holds but the second condition does not
    sides = gamma_inequality_sides(3, 0.06)
    assert sides[1][0] > sides[1][1]
    assert not check_gamma_inequalities(3, 0.06)


def test_gamma_inequalities_hold_for_small_gamma():
    for i in range(1, 13):
        assert check_gamma_inequalities(i, 1e-3 / 2 ** i)


def test_build_plan_reference_values():
    plan = build_plan(0.5, 4, 16, 1024, 0.3, 0.05)
    st_ = plan.stage_thresholds
    assert plan.i == 1 and plan.gamma == 0.5 / 160
    assert st_["j1d"] == pytest.approx(0.625) and st_["j1a"] == pytest.approx(0.3, abs=1e-12)
    assert st_["j2a"] < plan.alpha * st_["j2star"]
    assert plan.ell_delta == 64 and plan.universe_after_common == 192
    assert plan.x2 == 72
    assert not plan.invariant_violations()
    assert universe_bound(plan) == pytest.approx(plan.sample_sizes[-1] / plan.alpha)


def test_epsilon_does_not_depend_on_rounds():
    lo = build_plan(0.5, 2, 4, 8, 0.45, 0.05)
    hi = build_plan(0.5, 2, 4, 8, 0.2, 0.05, sample_cap=None)
    assert lo.i != hi.i and (lo.gamma == hi.gamma)
    assert lo.epsilon_bound == pytest.approx(hi.epsilon_bound, rel=1e-15)


@pytest.mark.parametrize("kwargs", [dict(j1=0.5), dict(j1=0.6), dict(j1=0.04), dict(T=1),
                                    dict(n=1), dict(delta=0)])
def test_build_plan_rejects(kwargs):
    args = dict(delta=0.5, T=2, m=4, n=8, j1=0.3, j2=0.05) | kwargs
    with pytest.raises(ValidationError):
        build_plan(**args)


def test_plan_json_round_trip():
    plan = build_plan(0.5, 2, 8, 128, 0.45, 0.05)
    back = ParamPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert back == plan
    with pytest.raises(ValidationError):
        ParamPlan.from_dict({"delta": 0.5})


def test_override_plan_reports_ceiling_violation():
    plan = build_plan(0.5, 2, 8, 64, 0.2, 0.05, gamma=0.1)
    assert plan.gamma_source == "override"
    assert any("not below" in v for v in plan.invariant_violations())
    assert not plan.hardness_applies


def test_random_plans_satisfy_invariants():
    rng = np.random.default_rng(2024)
    made = 0
    while made < 100:
        delta = float(rng.uniform(0.2, 0.9))
        T = int(rng.integers(2, 6))
        j2 = float(rng.uniform(0.005, 0.1))
        j1 = float(rng.uniform(j2, 1 - delta))
        if not j2 < j1 < 1 - delta:
            continue
        try:
            plan = build_plan(delta, T, int(rng.integers(1, 20)), int(rng.integers(2, 5000)),
                              j1, j2, sample_cap=None)
        except ValidationError:
            continue
        made += 1
        assert not plan.invariant_violations(), (delta, T, j1, j2, plan.invariant_violations())
        assert plan.stage_thresholds["j1a"] == pytest.approx(j1, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 0.9), st.integers(2, 8), st.floats(0.0, 1.0))
def test_choose_i_is_maximal(delta, T, frac):
    j1d = stage_thresholds_after_g(delta, T)[0]
    j1 = 0.01 + frac * (min(j1d, 1 - delta) - 0.02)
    gamma = 0.5 * delta / (20 * T) / 64
    i, alpha = choose_i_and_alpha(delta, T, gamma, j1)
    assert alpha <= 1 + 1e-12
    assert stage_thresholds_after_f(delta, T, i + 1, gamma)[0] < j1
