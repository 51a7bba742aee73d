"""Smoothness of the spectral function at the origin.

Three tools live here:

* jets of the approximant ``G(z;2n) = (q_{2n} - i q_{2n-1})/(p_{2n} - i p_{2n-1})``
  at ``z = 0`` and scaling fits of its derivatives against ``log n``;
* the integral criterion on the staggering ``s_n`` that decides which
  derivative of ``G`` is the first to diverge at the origin;
* the generalised Christoffel-Darboux identity for derivatives of ``p_n`` at 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import factorial
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson

from .fitting import (ExperimentSeries, ScalingFit, TailClass, classify_increments, fit_log_linear,
                      fit_log_power, fit_loglog, fit_plateau)
from .jets import Jet, _series_divide, poly_jets
from .sequences import CoeffSequence

__all__ = [
    "approx_green_jet",
    "approx_green_jets",
    "derivative_values",
    "DerivativeScaling",
    "derivative_scaling",
    "StaggerSpec",
    "CriterionVerdict",
    "smoothness_criterion",
    "first_divergent_order",
    "table_order",
    "estimate_stagger_exponent",
    "christoffel_darboux_check",
    "log_grid",
]

# jets beyond this level are computed in extended precision by default
EXTENDED_ABOVE = 100_000


def _dtype(precision, n_max):
    if precision == "auto":
        return np.longdouble if n_max > EXTENDED_ABOVE else np.float64
    if precision == "extended":
        return np.longdouble
    if precision == "double":
        return np.float64
    raise ValueError(f"unknown precision {precision!r}")


def log_grid(lo: float, hi: float, count: int, even: bool = True) -> np.ndarray:
    """Log-spaced integer grid (rounded to even values by default), unique and sorted."""
    g = np.logspace(math.log10(lo), math.log10(hi), int(count))
    g = np.round(g / 2) * 2 if even else np.round(g)
    return np.unique(g.astype(np.int64))


def approx_green_jets(seq, levels, K: int, precision: str = "auto") -> np.ndarray:
    """Taylor coefficients of ``G(z; L)`` at 0 for every even level ``L``.

    Returns a complex array of shape ``(len(levels), K+1)``.  Even-order
    coefficients are purely imaginary and odd-order ones purely real.
    """
    levels = np.asarray(levels, dtype=np.int64)
    if np.any(levels < 2) or np.any(levels % 2):
        raise ValueError("levels must be even and >= 2")
    dt = _dtype(precision, int(levels.max()))
    idx = np.concatenate([levels, levels - 1])
    T = poly_jets(seq, int(levels.max()), K, indices=idx, dtype=dt)
    cdt = np.clongdouble if dt == np.longdouble else np.complex128
    out = np.zeros((levels.size, K + 1), dtype=cdt)
    for r, L in enumerate(levels):
        i, j = T.row(int(L)), T.row(int(L) - 1)
        if T.p[i, 0] == 0:
            raise ZeroDivisionError(f"p_{L}(0) vanished")
        num = T.q[i].astype(cdt) - 1j * T.q[j].astype(cdt)
        den = T.p[i].astype(cdt) - 1j * T.p[j].astype(cdt)
        out[r] = _series_divide(num, den)
    # parity: even orders imaginary, odd orders real
    out[:, 0::2] = 1j * out[:, 0::2].imag
    out[:, 1::2] = out[:, 1::2].real
    return out


def approx_green_jet(seq, n: int, K: int, precision: str = "auto") -> Jet:
    """Jet of ``G(z;2n) = Omega_{2n}(i/b_{2n})`` at ``z = 0`` through order ``K``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return Jet(approx_green_jets(seq, [2 * n], K, precision)[0])


def derivative_values(coeffs: np.ndarray, k: int) -> np.ndarray:
    """Real-valued ``k``-th derivative: ``k! c_k`` (real part for odd ``k``, imaginary part for even)."""
    c = coeffs[:, k]
    v = c.real if k % 2 else c.imag
    return factorial(k) * np.asarray(v, dtype=float)


@dataclass
class DerivativeScaling:
    """Derivative series ``G^{(k)}(0;n)`` with candidate fits.

    ``best`` is the selected model; ``fits`` holds every candidate.  The
    ``verdict`` is a short description: ``bounded``, ``log-power growth`` or
    ``slow sub-logarithmic growth`` (cannot be separated from log log n or a
    plateau on the sampled window).
    """

    series: ExperimentSeries
    best: ScalingFit
    fits: dict[str, ScalingFit]
    verdict: str
    flags: tuple = field(default=())


def derivative_scaling(seq, k: int, n_grid, precision: str = "auto", window=None,
                       plateau_spread: float = 0.01) -> DerivativeScaling:
    """Extract ``G^{(k)}(0;n)`` over ``n_grid`` (even levels) and fit its growth in ``log n``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    levels = np.asarray(n_grid, dtype=np.int64)
    levels = np.unique(levels + (levels % 2))
    coeffs = approx_green_jets(seq, levels, k, precision)
    vals = derivative_values(coeffs, k)
    name = getattr(seq, "label", "sequence")
    series = ExperimentSeries(f"G^({k})(0;n) {name}", levels, vals,
                              metadata={"k": k, "precision": precision})
    n, y = levels.astype(float), vals
    if window is not None:
        m = (n >= window[0]) & (n <= window[1])
        n, y = n[m], y[m]
    fits = {"Plateau": fit_plateau(n, y), "LogLinear": fit_log_linear(n, y), "LogLog": fit_loglog(n, y)}
    flags = []
    try:
        fits["LogPower"] = fit_log_power(n, y)
    except ValueError:
        pass
    spread = np.ptp(y) / max(abs(np.mean(y)), 1e-300)
    if spread < plateau_spread:
        best, verdict = fits["Plateau"], "bounded"
    elif "LogPower" in fits and "exponent-at-bound" not in fits["LogPower"].flags:
        best, verdict = fits["LogPower"], "log-power growth"
    else:
        best, verdict = fits["LogLog"], "slow sub-logarithmic growth"
        flags.append("log-log-vs-plateau-unresolved")
    series.fits.update(fits)
    return DerivativeScaling(series, best, fits, verdict, tuple(flags))


# ---------------------------------------------------------------------------
# integral criterion


@dataclass(frozen=True)
class StaggerSpec:
    """Staggering ``s_n = coeff * (log n)^(-a)``, or an arbitrary function of ``u = log n``.

    ``func`` (if given) takes ``u`` arrays and overrides the power form.
    """

    a: float | None = None
    coeff: float = 1.0
    func: Callable[[np.ndarray], np.ndarray] | None = None
    estimated: bool = False

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(u), dtype=float)
        return self.coeff * u ** (-self.a)


def estimate_stagger_exponent(n, s) -> StaggerSpec:
    """Fit ``|s_n| = c (log n)^(-a)`` in log-log coordinates of ``log n``."""
    n = np.asarray(n, dtype=float)
    s = np.abs(np.asarray(s, dtype=float))
    m = (n > 2) & (s > 0)
    if m.sum() < 4:
        raise ValueError("need at least 4 nonzero staggering values")
    slope, icpt = np.polyfit(np.log(np.log(n[m])), np.log(s[m]), 1)
    return StaggerSpec(a=float(-slope), coeff=float(math.exp(icpt)), estimated=True)


@dataclass(frozen=True)
class CriterionVerdict:
    """Result of :func:`smoothness_criterion`.

    Attributes:
        verdict: ``holds`` (the k-th quantity diverges and the (k-1)-th is
            finite), ``inconsistent`` or ``indeterminate``.
        k, dimension: inputs.
        upper, lower: tail classes of ``u^{k-1} Q`` and ``u^{k-2} Q``
            (powers doubled for ``d = 1``); ``lower`` is still reported for
            ``k = 1`` but does not enter the verdict.
        table_k: tabulated first divergent order for power-law staggering.
        table_agrees: whether the verdict matches ``table_k``.
        origin_finite: whether ``sum s_n/f_n`` converges (finite spectral
            value at 0); when it does not, no derivative order applies.
    """

    verdict: str
    k: int
    dimension: str
    upper: TailClass
    lower: TailClass
    table_k: int | None = None
    table_agrees: bool | None = None
    checkpoints: np.ndarray | None = None
    Q: np.ndarray | None = None
    origin_finite: bool = True


def _antiderivative(t, w, anchor_infinity_exponent: float = 1.05):
    """``F(u) = int w du`` on the grid ``u = e^t`` without an additive constant.

    Integrable integrands (decaying faster than ``1/u``) are anchored at
    infinity, so ``F`` carries no constant; otherwise the integral starts at
    the first grid point, whose constant is subleading to the growth.
    """
    u = np.exp(t)
    integrand = w * u
    tail_w = np.abs(w[-64:])
    if np.all(tail_w > 0):
        e = -np.polyfit(t[-64:], np.log(tail_w), 1)[0]
    else:
        e = np.inf
    if e > anchor_infinity_exponent:
        rest = w[-1] * u[-1] / (e - 1) if np.isfinite(e) else 0.0
        # accumulate from the far end so small values are not lost to cancellation
        back = cumulative_simpson(integrand[::-1], x=-t[::-1], initial=0.0)[::-1]
        return -(back + rest)
    return cumulative_simpson(integrand, x=t, initial=0.0)


# extra doublings integrated beyond the last checkpoint; the tail extrapolation
# at the far end perturbs only this buffer
_BUFFER = 32


# integrands below this are treated as having underflowed; the grid is cut
# (together with its buffer) before they appear
_TINY = 1e-280


def _criterion_integral(spec: StaggerSpec, dimension: str, doublings: int, per_doubling: int):
    """Grid, ``u`` and ``Q(u)``; also the number of usable checkpoint doublings."""
    total = doublings + _BUFFER
    t = np.linspace(0.0, total * math.log(2.0), total * per_doubling + 1)
    u = np.exp(t)
    weight = u if dimension == "d1" else np.ones_like(u)
    with np.errstate(under="ignore"):
        w = weight * spec(u)
        small = np.flatnonzero(np.abs(w * u) < _TINY)
    if small.size:
        usable = max(int(small[0]) // per_doubling - 1, 0)
        total = min(total, usable)
        doublings = min(doublings, total - _BUFFER)
        if doublings < 8:
            raise ValueError("staggering decays too fast to evaluate the criterion")
        npts = total * per_doubling + 1
        t, u, w, weight = t[:npts], u[:npts], w[:npts], weight[:npts]
    inner = _antiderivative(t, w)
    Q = _antiderivative(t, weight * inner)
    return t, u, Q, doublings


def _origin_finite(spec: StaggerSpec, dimension: str, doublings: int = 128, per_doubling: int = 16) -> bool:
    """Convergence of ``int s_n/f_n dn``: ``int s du`` (d > 1) or ``int u s du`` (d = 1)."""
    t = np.linspace(0.0, doublings * math.log(2.0), doublings * per_doubling + 1)
    u = np.exp(t)
    w = spec(u) * (u if dimension == "d1" else 1.0) * u
    with np.errstate(under="ignore"):
        F = cumulative_simpson(w, x=t, initial=0.0)
    inc = np.diff(F[::per_doubling])
    return classify_increments(inc, j0=1, noise=1e-12, scale=max(float(np.max(np.abs(F))), 1e-300)).kind == "convergent"


def _classify_quantity(vals: np.ndarray) -> TailClass:
    with np.errstate(over="ignore", invalid="ignore"):
        if not np.all(np.isfinite(vals)):
            return TailClass("divergent", float("nan"), float("inf"), vals.size)
        inc = np.diff(np.abs(vals))
    return classify_increments(inc, j0=1, noise=1e-8, scale=max(float(np.max(np.abs(vals))), 1e-300))


def _norm_dim(dimension) -> str:
    d = str(dimension).lower().replace(" ", "")
    if d in ("1", "d1", "d=1"):
        return "d1"
    if d in ("gt1", "d>1", "dgt1", ">1", "2", "3"):
        return "dgt1"
    raise ValueError(f"dimension must be 'd1' or 'dgt1', not {dimension!r}")


def table_order(a: float, dimension) -> int | None:
    """Tabulated first divergent derivative for ``s_n = (log n)^(-a)``.

    ``d > 1``: ``k = 1`` for ``1 < a <= 2``, ``k = 2`` for ``2 < a < 3``,
    ``k`` for ``k <= a < k+1`` otherwise.  ``d = 1``: ``k = 1`` for
    ``2 < a <= 4``, ``k = 2`` for ``4 < a < 6``, ``k`` for ``2k <= a < 2k+2``.
    Returns ``None`` when the spectral value at 0 is not finite.
    """
    d = _norm_dim(dimension)
    if d == "dgt1":
        if a <= 1:
            return None
        if a <= 2:
            return 1
        if a < 3:
            return 2
        return int(math.floor(a))
    if a <= 2:
        return None
    if a <= 4:
        return 1
    if a < 6:
        return 2
    return int(math.floor(a / 2))


def smoothness_criterion(s, dimension, k: int, doublings: int = 128, per_doubling: int = 64,
                         n: np.ndarray | None = None) -> CriterionVerdict:
    """Check whether ``k`` is the first divergent derivative for staggering ``s``.

    With ``u = log n`` the criterion uses ``Q(u) = int du1 int du2 s`` in
    ``d > 1`` and ``Q(u) = int du1 u1 int du2 u2 s`` in ``d = 1``; the
    ``k``-th derivative is the first to diverge when ``u^{k-1} Q -> infinity``
    and ``u^{k-2} Q`` stays finite (powers doubled for ``d = 1``; only the first
    condition for ``k = 1``).  Both quantities are evaluated at the dyadic
    checkpoints ``u = 2^j`` and classified from their increments.

    Args:
        s: exponent ``a`` of ``(log n)^(-a)``, a :class:`StaggerSpec`, or a
            numeric array of ``s_n`` (``n`` given separately, default
            ``1..len``), for which ``a`` is estimated by a fit first.
        dimension: ``"d1"`` or ``"dgt1"``.
        k: derivative order (>= 1).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    d = _norm_dim(dimension)
    if isinstance(s, StaggerSpec):
        spec = s
    elif np.ndim(s) == 0:
        spec = StaggerSpec(a=float(s))
    else:
        arr = np.asarray(s, dtype=float)
        nn = np.arange(1, arr.size + 1) if n is None else np.asarray(n)
        spec = estimate_stagger_exponent(nn, arr)
    origin_finite = _origin_finite(spec, d)
    t, u, Q, doublings = _criterion_integral(spec, d, doublings, per_doubling)
    idx = np.arange(per_doubling, doublings * per_doubling + 1, per_doubling)
    uc, Qc = u[idx], Q[idx]
    scale = 2 if d == "d1" else 1
    with np.errstate(over="ignore", invalid="ignore"):
        upper = _classify_quantity(uc ** (scale * (k - 1)) * Qc)
        lower = _classify_quantity(uc ** (scale * (k - 2)) * Qc)
    if not origin_finite:
        # the criterion presupposes a finite, nonzero spectral value at 0
        verdict = "inconsistent"
    elif upper.kind == "marginal" or (k >= 2 and lower.kind == "marginal"):
        verdict = "indeterminate"
    elif upper.kind == "divergent" and (k == 1 or lower.kind == "convergent"):
        verdict = "holds"
    else:
        verdict = "inconsistent"
    tk = table_order(spec.a, d) if spec.a is not None and spec.func is None else None
    agrees = None
    if tk is not None:
        agrees = (verdict == "holds") == (tk == k)
    return CriterionVerdict(verdict, k, d, upper, lower, tk, agrees, uc, Qc, origin_finite)


def first_divergent_order(s, dimension, k_max: int = 16, **kw) -> int | None:
    """Smallest ``k <= k_max`` for which :func:`smoothness_criterion` holds."""
    for k in range(1, k_max + 1):
        if smoothness_criterion(s, dimension, k, **kw).verdict == "holds":
            return k
    return None


# ---------------------------------------------------------------------------
# generalised Christoffel-Darboux identity


def christoffel_darboux_check(seq: CoeffSequence | np.ndarray, n: int, m: int,
                              precision: str = "double") -> float:
    """Relative residual of the derivative Christoffel-Darboux identity at ``x = 0``.

    With ``P^{(r)}_j`` the ``r``-th derivative of ``p_j`` at 0 and ``r = m - 1``:

        b_{n+1} [P^{(r+1)}_{n+1} P^{(r)}_n - P^{(r)}_{n+1} P^{(r+1)}_n]
            = sum_{j<=n} [(r+1) (P^{(r)}_j)^2 - r P^{(r+1)}_j P^{(r-1)}_j]

    so ``m = 1`` is the classical identity ``b_{n+1}(p'_{n+1} p_n - p_{n+1} p'_n) = sum p_j^2``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    dt = np.longdouble if precision == "extended" else np.float64
    T = poly_jets(seq, n + 1, m, dtype=dt)
    fact = np.array([factorial(i) for i in range(m + 1)], dtype=dt)
    P = T.p * fact            # P[j, r] = r-th derivative of p_j at 0
    r = m - 1
    lhs = T.b[n + 1] * (P[n + 1, r + 1] * P[n, r] - P[n + 1, r] * P[n, r + 1])
    terms = (r + 1) * P[: n + 1, r] ** 2
    if r >= 1:
        terms = terms - r * P[: n + 1, r + 1] * P[: n + 1, r - 1]
    rhs = np.sum(terms)
    scale = max(abs(lhs), abs(rhs))
    if scale == 0:
        return 0.0
    return float(abs(lhs - rhs) / scale)
