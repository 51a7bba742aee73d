from __future__ import annotations

import numpy as np
import pytest

from lanczos_gf.fitting import (ExperimentSeries, FitError, classify_increments, fit_log_linear, fit_log_power,
                                fit_loglog, fit_plateau, rate_fit)


def test_power_law_exact():
    n = np.logspace(2, 4, 12)
    f = rate_fit((n, 3.0 * n ** -2.0))
    assert f.exponent == pytest.approx(-2.0, abs=0.01)
    assert f.prefactor == pytest.approx(3.0, rel=1e-10)
    assert f.r2 == pytest.approx(1.0)
    assert f.flags == ()


def test_power_law_uses_error_column():
    n = np.logspace(1, 3, 10)
    s = ExperimentSeries("s", n, np.ones_like(n), error=n ** -1.5)
    assert rate_fit(s).exponent == pytest.approx(-1.5, abs=1e-10)


def test_power_law_preconditions():
    n = np.logspace(2, 3, 12)
    with pytest.raises(FitError):
        rate_fit((n, n ** -1.0))  # one decade only
    with pytest.raises(FitError):
        rate_fit((n[:4], n[:4] ** -1.0), min_decades=0.1)


def test_non_monotone_flag():
    n = np.logspace(1, 4, 30)
    y = n ** -1.0 * (1 + 0.5 * (-1.0) ** np.arange(30))
    assert "non-monotone" in rate_fit((n, y)).flags


def test_log_power_recovers_exponent():
    n = np.logspace(3, 7, 20)
    y = 0.7 * np.log(n) ** 1.5 + 2.0
    f = fit_log_power(n, y)
    assert f.exponent == pytest.approx(1.5, abs=1e-3)
    assert f.offset == pytest.approx(2.0, abs=1e-2)


def test_log_linear_and_loglog():
    n = np.logspace(2, 6, 15)
    assert fit_log_linear(n, 2 * np.log(n) - 1).prefactor == pytest.approx(2.0)
    assert fit_loglog(n, 3 * np.log(np.log(n))).prefactor == pytest.approx(3.0)


def test_plateau_quality():
    f = fit_plateau(np.arange(5), np.array([1.0, 1.01, 0.99, 1.0, 1.0]))
    assert f.prefactor == pytest.approx(1.0)
    assert f.r2 == pytest.approx(0.98)


def test_csv_is_reproducible(tmp_path):
    s = ExperimentSeries("s", np.array([1, 2]), np.array([1 + 2j, 0.1]), error=np.array([0.5, 0.25]))
    text = s.to_csv(tmp_path / "s.csv")
    assert text.splitlines()[0] == "N,re,im,abs,error"
    assert (tmp_path / "s.csv").read_text() == s.to_csv()


def test_classify_geometric_is_convergent():
    assert classify_increments(0.5 ** np.arange(1, 20)).kind == "convergent"


def test_classify_harmonic_blocks_is_divergent():
    # sum 1/(n log n) over doublings gives block increments ~ 1/j
    j = np.arange(1, 30)
    assert classify_increments(1.0 / j).kind == "divergent"


def test_classify_log_squared_is_convergent():
    j = np.arange(1, 60)
    assert classify_increments(1.0 / j ** 2, j0=1).kind == "convergent"


def test_classify_too_short():
    assert classify_increments([1.0, 0.5]).kind == "marginal"


def test_classify_noise_floor():
    inc = np.r_[0.5 ** np.arange(1, 10), [1e-17, 3e-17]]
    assert classify_increments(inc, scale=1.0).kind == "convergent"
