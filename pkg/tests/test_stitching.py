from __future__ import annotations

import math

import numpy as np
import pytest

from lanczos_gf.cfrac import descent_green
from lanczos_gf.products import log_pi_values, mp_pi_limit
from lanczos_gf.sequences import custom, meixner_pollaczek, tabulated, toy_irrelevant, toy_relevant
from lanczos_gf.stitching import (HorizonError, StitchPlan, _tail_zero, calibrate_zero_freq_M, cauchy_product_M,
                                  constant_tail_green, error_bound_finite_im, error_bound_zero_freq,
                                  finite_im_bound_value, plan_from_fit, stitch_error_series, stitched_green,
                                  zero_freq_direct, zero_freq_stitched)


def test_plan_validation():
    with pytest.raises(ValueError):
        StitchPlan(0)
    with pytest.raises(ValueError):
        StitchPlan(5, "Linear")
    with pytest.raises(ValueError):
        StitchPlan(5, "MP", alpha=-1.0)
    assert StitchPlan(5, "MP", 2.0, 3.0).with_level(9).alpha == 2.0


def test_plan_from_fit_matches_growth():
    plan = plan_from_fit(toy_relevant(), 50, fit_window=(200, 2000))
    assert plan.alpha == pytest.approx(1.0, abs=1e-3)
    assert plan.eta == pytest.approx(3.0, abs=2e-2)


def test_constant_tail_example():
    g = constant_tail_green(-3j, 1.0)
    assert g == pytest.approx(1j * (math.sqrt(13) - 3) / 2, abs=1e-15)
    assert g.imag == pytest.approx(0.302776, abs=1e-6)
    # fixed point of one level
    assert g == pytest.approx(1 / (-3j - g), abs=1e-15)


def test_constant_tail_branch_decays():
    z = np.array([0.5 - 0.1j, -3 - 2j, 2.5 - 1e-3j])
    g = constant_tail_green(z, 1.3)
    assert np.all(np.abs(1.3 * g) <= 1 + 1e-12)
    assert np.all(g.imag > 0)
    with pytest.raises(ValueError):
        constant_tail_green(1.0, 1.0)


def test_exact_tail_reproduces_descent():
    plan = StitchPlan(50, "MP", 1.0, 1.0)
    head = meixner_pollaczek(1, 1).array(50)
    for z in (-1j, 0.7 - 0.4j):
        stitched = stitched_green(head, plan, z).value
        exact = complex(descent_green(meixner_pollaczek(1, 1), z).value)
        assert stitched == pytest.approx(exact, abs=1e-9)


def test_stitched_error_decreases_with_level():
    s = toy_irrelevant()
    ref = complex(descent_green(s, -1j, tol=1e-13).value)
    errs = [abs(stitched_green(s, StitchPlan(N, "MP", 1.0, 1.0), -1j).value - ref) for N in (10, 40, 160)]
    assert errs[0] > errs[1] > errs[2]


def test_stitched_green_metadata():
    ev = stitched_green(toy_relevant(), StitchPlan(20, "Constant"), -1j)
    d = ev.as_dict()
    assert d["method"] == "stitch-Constant" and d["N"] == 20
    with pytest.raises(ValueError):
        stitched_green(toy_relevant(), StitchPlan(20, "Constant"), 1j)


def test_constant_plan_is_partial_product():
    s = toy_relevant()
    for N in (10, 11, 1000):
        val = zero_freq_stitched(s, StitchPlan(N, "Constant"))
        assert val == pytest.approx(1j * math.exp(log_pi_values(s, [N])[0]), rel=1e-14)


def test_mp_tail_value_at_origin():
    assert mp_pi_limit(1, 2) == pytest.approx(1j)


def test_zero_freq_stitched_matches_direct_iteration():
    s = toy_relevant()
    ms = meixner_pollaczek(1, 3)
    for N in (20, 21):
        plan = StitchPlan(N, "MP", 1.0, 3.0)
        direct = zero_freq_direct(s, N, _tail_zero(ms, N))
        assert zero_freq_stitched(s, plan) == pytest.approx(direct, rel=1e-12)


def test_exact_tail_gives_closed_form_at_origin():
    plan = StitchPlan(100, "MP", 1.0, 2.0)
    assert zero_freq_stitched(meixner_pollaczek(1, 2), plan) == pytest.approx(1j, rel=1e-13)


def test_irrelevant_toy_limit():
    val = zero_freq_stitched(toy_irrelevant(), StitchPlan(10_000, "MP", 1.0, 1.0))
    assert abs(abs(val) - math.pi ** 2 / 8) < 1e-4


def test_finite_im_bound_examples():
    s = toy_relevant()
    assert error_bound_finite_im(s, s, -1j, 10).value == 0.0
    assert finite_im_bound_value(0.1, -1j) == pytest.approx(0.2)


def test_finite_im_bound_scales_inverse_n():
    s, ms = toy_irrelevant(), meixner_pollaczek(1, 1)
    r1 = error_bound_finite_im(s, ms, -1j, 100)
    r2 = error_bound_finite_im(s, ms, -1j, 200)
    assert r1.certified
    assert r1.value / r2.value == pytest.approx(2.0, rel=0.02)
    assert r1.value == pytest.approx(2 * (1 / (8 * 101)), rel=0.01)


def test_finite_im_bound_uncertifiable():
    with pytest.raises(HorizonError):
        error_bound_finite_im(meixner_pollaczek(1, 1), meixner_pollaczek(2, 1), -1j, 10)
    r = error_bound_finite_im(meixner_pollaczek(1, 1), meixner_pollaczek(2, 1), -1j, 10, strict=False)
    assert not r.certified


def test_zero_freq_bound_cases():
    n_seq = meixner_pollaczek(1, 1)
    assert error_bound_zero_freq(n_seq, n_seq, 50).value == 0.0
    conv = error_bound_zero_freq(custom("n + n**-2"), n_seq, 50, horizon=1 << 16)
    assert conv.classification == "convergent" and np.isfinite(conv.value)
    div = error_bound_zero_freq(custom("n + 1/log(n + 1)"), n_seq, 50, horizon=1 << 20)
    assert div.classification == "divergent" and div.value == float("inf")


def test_calibrated_m_reproduces_measured_error():
    s, ms = toy_irrelevant(), meixner_pollaczek(1, 1)
    err = abs(abs(zero_freq_stitched(s, StitchPlan(200, "MP", 1.0, 1.0))) - math.pi ** 2 / 8)
    M = calibrate_zero_freq_M(err, s, ms, 200)
    assert error_bound_zero_freq(s, ms, 200, M=M).value == pytest.approx(err, rel=1e-12)


def test_cauchy_product_m_bound_dominates():
    s, ms = toy_irrelevant(), meixner_pollaczek(1, 1)
    M = cauchy_product_M(s, ms, 100, math.pi ** 2 / 8)
    for N in (100, 300, 1000, 3000):
        err = abs(abs(zero_freq_stitched(s, StitchPlan(N, "MP", 1.0, 1.0))) - math.pi ** 2 / 8)
        assert error_bound_zero_freq(s, ms, N, M=M).value >= err


def test_error_series_vanishes_for_exact_tail():
    s = toy_relevant()
    assert stitch_error_series(s, s, 50).estimate == 0.0


def _series_exponent(b, b_s, Ns):
    vals = [abs(stitch_error_series(b, b_s, N).estimate) for N in Ns]
    return np.polyfit(np.log(Ns), np.log(vals), 1)[0]


def test_error_series_rates():
    Ns = np.array([100, 200, 400, 800, 1600])
    assert _series_exponent(toy_relevant(), meixner_pollaczek(1, 3), Ns) == pytest.approx(-2 / 3, abs=0.1)
    assert _series_exponent(toy_irrelevant(), meixner_pollaczek(1, 1), Ns) == pytest.approx(-2.0, abs=0.2)


def test_error_series_calibration():
    s, ms = toy_relevant(), meixner_pollaczek(1, 3)
    raw = stitch_error_series(s, ms, 100).raw_sum
    est = stitch_error_series(s, ms, 100, reference=(raw, 0.5 * raw))
    assert est.fitted_c == pytest.approx(0.5)
    assert est.estimate == pytest.approx(0.5 * raw)


def test_tabulated_head_is_enough():
    t = tabulated(toy_relevant().values(np.arange(1, 31)))
    assert zero_freq_stitched(t, StitchPlan(30, "Constant")) == zero_freq_stitched(toy_relevant(), StitchPlan(30, "Constant"))
    with pytest.raises(IndexError):
        zero_freq_stitched(toy_relevant().array(10), StitchPlan(30, "Constant"))
