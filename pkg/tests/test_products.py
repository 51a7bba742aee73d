from __future__ import annotations

import math

import numpy as np
import pytest

from lanczos_gf.jets import poly_jets
from lanczos_gf.products import (convergence_criterion, diffusion_estimate, dirac_delta_test, log_pi_values,
                                 mp_pi_limit, pi_product, pi_trace, spectral_origin)
from lanczos_gf.sequences import custom, meixner_pollaczek, tabulated, toy_irrelevant, toy_relevant


def test_alternating_example():
    b = np.r_[1.0, np.tile([1.0, 2.0], 4)]
    assert pi_product(b, 2) == pytest.approx(2.0)
    assert pi_product(b, 4) == pytest.approx(8.0)


def test_trace_matches_pointwise_values():
    s = toy_relevant()
    tr = pi_trace(s, 500)
    idx = np.array([1, 2, 3, 77, 500])
    assert np.allclose(tr.log_values[idx - 1], log_pi_values(s, idx), rtol=1e-13, atol=1e-13)
    assert tr.n_max == 500 and tr.parity[0] == 1
    assert np.allclose(tr.values()[:2], np.exp(tr.log_values[:2]))


def test_unsorted_indices():
    s = toy_relevant()
    a = log_pi_values(s, [900, 3, 50])
    assert a[1] == pytest.approx(log_pi_values(s, [3])[0])
    assert a[0] == pytest.approx(log_pi_values(s, [900])[0])
    with pytest.raises(ValueError):
        log_pi_values(s, [0])


def test_wallis_type_product():
    assert pi_product(meixner_pollaczek(1, 1), 10_000) == pytest.approx(math.pi / 2, rel=0.01)


def test_irrelevant_toy_product():
    assert pi_product(toy_irrelevant(), 100_000) == pytest.approx(math.pi ** 2 / 8, abs=1e-3)


def test_mp_limit_closed_forms():
    assert mp_pi_limit(1, 1) == pytest.approx(1j * math.pi / 2)
    assert mp_pi_limit(1, 2) == pytest.approx(1j)
    assert mp_pi_limit(2, 3) == pytest.approx(1j * math.pi / 8)
    with pytest.raises(ValueError):
        mp_pi_limit(0, 1)


def test_spectral_origin_values():
    so = spectral_origin(meixner_pollaczek(1, 2), 10_000)
    assert so.averaged == pytest.approx(1j, rel=1e-3)
    assert so.classification == "finite-nonzero"
    assert "conjectural" in so.note
    rel = spectral_origin(toy_relevant(), 10_000_000, classify=False)
    assert abs(abs(rel.raw) - 2.8071) < 1e-3


def test_spectral_origin_vanishing():
    so = spectral_origin(custom("n/log(n+1) - 0.5*(-1)**n"), 1 << 20)
    assert so.classification == "vanishing"
    assert abs(so.averaged) < 0.1


def test_diffusion_examples():
    est = diffusion_estimate(meixner_pollaczek(1, 1), N=[10_000, 10_001], norm_ratio=1.0)
    assert est.D_avg[-1] == pytest.approx(math.pi / 2, rel=1e-3)
    assert np.allclose(est.twoD, 2 * est.D)
    zero = diffusion_estimate(meixner_pollaczek(1, 1), N=[50], norm_ratio=0.0)
    assert zero.D[0] == 0.0
    with pytest.raises(ValueError):
        diffusion_estimate(meixner_pollaczek(1, 1), norm_ratio=1.0)


def test_diffusion_tail_mean():
    b = np.r_[1.0, np.arange(1, 21, dtype=float)]
    est = diffusion_estimate(b, norm_ratio=2.0)
    assert np.isnan(est.D_avg[0])
    assert est.tail_mean(last=4, doubled=False) == pytest.approx(np.mean(est.D_avg[-4:]))
    assert est.tail_mean(last=4) == pytest.approx(2 * np.mean(est.D_avg[-4:]))


def test_convergence_criterion_cases():
    assert convergence_criterion(lambda n: n, lambda n: n ** -0.5).classification == "finite-nonzero"
    assert convergence_criterion(lambda n: n, lambda n: 1 / np.log(n)).classification == "divergent"
    assert convergence_criterion(lambda n: n, lambda n: -1 / np.log(n)).classification == "vanishing"
    d1 = convergence_criterion(lambda n: n / np.log(n), lambda n: np.log(n) ** -2.0)
    assert d1.classification == "divergent"


def test_convergence_criterion_arrays_and_flags():
    n = np.arange(1, 1 << 12, dtype=float)
    res = convergence_criterion(n, n ** -0.5)
    assert res.classification == "finite-nonzero"
    short = convergence_criterion(n[:6], n[:6])
    assert short.classification == "marginal"
    big = convergence_criterion(lambda n: np.ones_like(n), lambda n: np.ones_like(n), n_max=1 << 12)
    assert "staggering-not-small" in big.flags


def test_even_polynomial_identity():
    for s in (toy_relevant(), meixner_pollaczek(1, 1), custom("n/log(n+1) + 0.3*(-1)**n")):
        idx = np.array([2, 10, 100, 1000])
        T = poly_jets(s, 1000, 0, indices=idx)
        pi = np.exp(log_pi_values(s, idx))
        assert np.allclose(s.values(idx) * pi * T.p[:, 0] ** 2, 1.0, rtol=1e-10, atol=0)


def test_dirac_delta_verdicts():
    assert dirac_delta_test(meixner_pollaczek(1, 1), 1 << 16).verdict == "no-delta"
    loc = dirac_delta_test(custom("n/log(n+1) + (-1)**n"), 1 << 16)
    assert loc.verdict == "delta" and 0 < loc.weight < 1
    neg = dirac_delta_test(custom("n/log(n+1) - 0.5*(-1)**n"), 1 << 16)
    assert neg.verdict == "no-delta"
    assert any("tend to zero" in m for m in neg.notes)


def test_dirac_delta_short_range():
    with pytest.raises(ValueError):
        dirac_delta_test(toy_relevant(), 4)


def test_tabulated_input_bounds():
    t = tabulated(toy_relevant().values(np.arange(1, 101)))
    assert pi_product(t, 100) == pytest.approx(pi_product(toy_relevant(), 100))
    with pytest.raises(Exception):
        pi_product(t.array(100), 200)
