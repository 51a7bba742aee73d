from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from lanczos_gf.cfrac import (NonConvergence, SingularLevel, _seed, apply_levels, cauchy_column, descent_green,
                              mobius_apply, mp_green_quadrature, mp_spectral_density, poly_eval, truncated_green)
from lanczos_gf.jets import poly_jets
from lanczos_gf.sequences import meixner_pollaczek, tabulated, toy_irrelevant, toy_relevant

# G(z) of the Meixner-Pollaczek weight (alpha = 1, eta = 2), from 30-digit mpmath
# quadrature of rho(x) = (pi x / 2) / sinh(pi x / 2) / 4 against 1/(z - x)
MP12_REFERENCE = {
    -1j: 0.57079632679489661923j,
    -2j: 0.386294361119890618834j,
    -3j: 0.287611019615310142306j,
}


def test_mobius_examples():
    assert mobius_apply(-1j, 1.0, 1j) == pytest.approx(0.5j)
    assert mobius_apply(0.3 - 2j, 5.0, 0.0) == pytest.approx(1 / (0.3 - 2j))
    with pytest.raises(SingularLevel):
        mobius_apply(1.0, 1.0, 1.0)


def test_apply_levels_pole_reports_level():
    with pytest.raises(SingularLevel) as exc:
        apply_levels(0.0, np.array([1.0, 1.0]), 0.0)
    assert exc.value.level == 2


def test_apply_levels_vectorized():
    z = np.array([-1j, 0.5 - 2j])
    b = np.array([1.0, 2.0, 3.0])
    out = apply_levels(z, b, 0.0)
    assert out[1] == pytest.approx(apply_levels(0.5 - 2j, b, 0.0))


def test_polynomials_constant_sequence_at_zero():
    pp = poly_eval(np.ones(8), 0.0, 6)
    assert np.allclose(pp.true_p(), [1, 0, -1, 0, 1, 0, -1])
    assert np.allclose(pp.true_q(), [0, 1, 0, -1, 0, 1, 0])


def test_wronskian_first_step():
    pp = poly_eval(toy_relevant(), 0.3 - 0.7j, 1)
    assert pp.wronskian()[0] == pytest.approx(1.0, abs=1e-15)


def test_wronskian_mp_example():
    pp = poly_eval(meixner_pollaczek(1, 2), -2j, 50)
    assert np.max(np.abs(pp.wronskian() - 1)) < 1e-12


def test_polynomial_rescaling_keeps_ratios():
    # for b_n = 1 at z = -3i, |p_N| ~ 3.3^N overflows double without rescaling
    b = np.ones(1001)
    pp = poly_eval(b, -3j, 1000)
    assert np.max(pp.exponent) > 0
    assert np.all(np.isfinite(pp.p))
    direct = pp.q[-1] / pp.p[-1]
    assert direct == pytest.approx(truncated_green(b, -3j, 1000), rel=1e-12)


def test_truncated_green_first_level():
    assert truncated_green(toy_relevant(), -2j, 1) == pytest.approx(0.5j)


def test_truncated_green_methods_agree():
    for z in (-1j, 0.4 - 0.3j, -2 - 1j):
        a = truncated_green(meixner_pollaczek(1, 2), z, 40)
        b = truncated_green(meixner_pollaczek(1, 2), z, 40, method="poly")
        assert a == pytest.approx(b, rel=1e-12)


def test_truncated_green_equals_zero_tail_levels():
    b = toy_relevant().array(30)
    z = 0.2 - 1.1j
    assert truncated_green(b, z, 30) == pytest.approx(apply_levels(z, b[1:], 0.0), rel=1e-14)


def test_truncated_green_rejects_real_axis():
    with pytest.raises(ValueError):
        truncated_green(toy_relevant(), 1.0, 5)


def test_truncation_error_is_cauchy_over_p():
    s = meixner_pollaczek(1, 2)
    G = mp_green_quadrature(-1j, 1, 2)
    col = cauchy_column(s, -1j, 100, G)
    for N in (5, 20, 50, 100):
        pp = poly_eval(s, -1j, N)
        err = G - truncated_green(s, -1j, N)
        assert err == pytest.approx(col.C[N] / pp.true_p()[N], rel=1e-8)


def test_plain_seed_value():
    assert _seed(-1j, 100.0, 100.0, "plain") == pytest.approx(0.01j)
    assert _seed(1j, 100.0, 100.0, "plain") == pytest.approx(-0.01j)
    with pytest.raises(ValueError):
        _seed(-1j, 1.0, 1.0, "bogus")


def test_quadrature_against_frozen_values():
    for z, ref in MP12_REFERENCE.items():
        assert mp_green_quadrature(z, 1, 2) == pytest.approx(ref, abs=1e-13)


def test_descent_against_frozen_values():
    s = meixner_pollaczek(1, 2)
    for z, ref in MP12_REFERENCE.items():
        assert complex(descent_green(s, z).value) == pytest.approx(ref, abs=1e-9)


def test_descent_upper_half_plane_is_conjugate():
    s = meixner_pollaczek(1, 2)
    lo = complex(descent_green(s, 0.3 - 1j).value)
    hi = complex(descent_green(s, 0.3 + 1j).value)
    assert hi == pytest.approx(lo.conjugate(), abs=1e-9)


def test_descent_doubling_invariance():
    s = toy_relevant()
    r = descent_green(s, 0.5 - 1j)
    again = descent_green(s, 0.5 - 1j, depth=2 * r.depth)
    assert abs(complex(again.value) - complex(r.value)) < 1e-10


def test_descent_budget_exhausted():
    with pytest.raises(NonConvergence):
        descent_green(meixner_pollaczek(1, 2), -0.05j, seed="plain", tol=1e-14, budget=1024)
    r = descent_green(meixner_pollaczek(1, 2), -0.05j, seed="plain", tol=1e-14, budget=1024,
                      raise_on_failure=False)
    assert not r.converged


def test_descent_rejects_real_axis():
    with pytest.raises(ValueError):
        descent_green(toy_relevant(), 2.0)


def test_mp_density_normalized():
    for a, e in ((1, 1), (1, 2), (2, 3)):
        mass = integrate.quad(lambda x: mp_spectral_density(x, a, e), -np.inf, np.inf)[0]
        assert mass == pytest.approx(1.0, abs=1e-10)
    assert mp_spectral_density(0.0, 1, 1) == pytest.approx(0.5)
    assert mp_spectral_density(0.0, 1, 2) == pytest.approx(1 / math.pi)


def test_cauchy_first_entry_phase():
    G = mp_green_quadrature(-2j, 1, 2)
    col = cauchy_column(meixner_pollaczek(1, 2), -2j, 10, G)
    c0 = col.phase_reduced()[0]
    assert abs(c0.imag) < 1e-15 and c0.real > 0
    assert col.phase_ok


def test_cauchy_phase_detects_bad_green():
    col = cauchy_column(meixner_pollaczek(1, 2), -1j, 60, 0.5j)
    assert not col.phase_ok
    with pytest.raises(ArithmeticError):
        cauchy_column(meixner_pollaczek(1, 2), -1j, 60, 0.5j, strict=True)


def test_cauchy_zero_frequency_product_equality():
    s = meixner_pollaczek(1, 1)
    col = cauchy_column(s, 0.0, 40, 1j * math.pi / 2)
    c = col.phase_reduced()
    b = s.array(40)
    for m in range(1, 20):
        k = np.arange(1, m + 1)
        ref = c[0] * np.prod(b[2 * k - 1] / b[2 * k])
        assert c[2 * m] == pytest.approx(ref, rel=1e-12)


def test_cauchy_ratio_tends_to_i():
    s = meixner_pollaczek(1, 1)
    G = complex(descent_green(s, -1j, tol=1e-14).value)
    col = cauchy_column(s, -1j, 1000, G)
    ratio = col.C[1000] / col.C[999]
    assert abs(ratio - 1j) < 5e-3


def test_even_polynomials_at_zero_give_density():
    s = meixner_pollaczek(1, 1)
    n = 10_000
    T = poly_jets(s, 2 * n, 0, indices=[2 * n])
    val = T.p[0, 0] ** 2 * s(2 * n)
    assert val == pytest.approx(1 / (math.pi * 0.5), rel=0.01)


def test_tabulated_sequence_in_recurrences():
    t = tabulated(toy_relevant().values(np.arange(1, 41)))
    assert truncated_green(t, -1j, 40) == pytest.approx(truncated_green(toy_relevant(), -1j, 40), rel=1e-15)
