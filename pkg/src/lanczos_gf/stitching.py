"""Stitched continued-fraction approximants and their error estimates.

A stitched approximant keeps the exact coefficients ``b_1..b_N`` and replaces
the unknown tail ``b_{n>N}`` by a solvable sequence: the Meixner-Pollaczek
family ``alpha*sqrt(n(n-1+eta))`` or the constant ``b_N``.  The tail
Green's function ``G_s^{(N)}`` is then pushed through the ``N`` exact Mobius
levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .cfrac import SingularLevel, apply_levels, descent_green
from .fitting import TailClass, classify_increments
from .products import CONJECTURAL_NOTE, _bfun, _dyadic_edges, log_pi_values, mp_pi_limit
from .sequences import CoeffSequence, GrowthModel, fit_growth, meixner_pollaczek

__all__ = [
    "StitchPlan",
    "GreenEvaluation",
    "HorizonError",
    "stitched_green",
    "constant_tail_green",
    "plan_from_fit",
    "terminator_sequence",
    "zero_freq_stitched",
    "zero_freq_direct",
    "ErrorBoundReport",
    "error_bound_finite_im",
    "finite_im_bound_value",
    "error_bound_zero_freq",
    "calibrate_zero_freq_M",
    "cauchy_product_M",
    "StitchErrorEstimate",
    "stitch_error_series",
]


class HorizonError(RuntimeError):
    """The summation horizon is too short to certify a supremum or a tail."""


@dataclass(frozen=True)
class StitchPlan:
    """How the tail beyond level ``N`` is replaced.

    Attributes:
        N: stitch level (coefficients ``b_1..b_N`` are used exactly).
        terminator: ``"MP"`` or ``"Constant"``.
        alpha, eta: Meixner-Pollaczek parameters (ignored for ``Constant``).
        depth_budget: maximum descent depth for the MP tail.
        tol: descent tolerance.
        match_report: how ``alpha`` and ``eta`` were obtained.
    """

    N: int
    terminator: str = "MP"
    alpha: float = 1.0
    eta: float = 1.0
    depth_budget: int = 1 << 20
    tol: float = 1e-10
    match_report: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("stitch level N must be >= 1")
        if self.terminator not in ("MP", "Constant"):
            raise ValueError(f"terminator must be 'MP' or 'Constant', not {self.terminator!r}")
        if self.terminator == "MP" and not (self.alpha > 0 and self.eta > 0):
            raise ValueError("MP terminator needs alpha > 0 and eta > 0")

    def with_level(self, N: int) -> "StitchPlan":
        return StitchPlan(N, self.terminator, self.alpha, self.eta, self.depth_budget, self.tol, dict(self.match_report))


@dataclass(frozen=True)
class GreenEvaluation:
    """A Green's function value with provenance."""

    z: complex
    value: complex
    method: str
    N: int
    depth: int | None = None
    tolerance: float | None = None
    error_bound: float | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {
            "z_re": self.z.real, "z_im": self.z.imag,
            "value_re": self.value.real, "value_im": self.value.imag, "abs": abs(self.value),
            "method": self.method, "N": self.N, "depth": self.depth,
            "tolerance": self.tolerance, "error_bound": self.error_bound, **self.metadata,
        }


def plan_from_fit(b, N: int, fit_window: tuple[int, int] | None = None, **kw) -> StitchPlan:
    """MP plan whose ``alpha`` and ``eta`` match the linear growth of ``b`` through O(1)."""
    fit = fit_growth(b, GrowthModel.LINEAR, fit_window=fit_window)
    return StitchPlan(N, "MP", fit.alpha, fit.eta_matched,
                      match_report={"alpha": fit.alpha, "gamma": fit.gamma, "eta": fit.eta_matched,
                                    "window": list(fit.fit_window), "order": "O(1)"}, **kw)


def terminator_sequence(plan: StitchPlan) -> CoeffSequence:
    if plan.terminator != "MP":
        raise ValueError("only the MP terminator is a closed-form sequence")
    return meixner_pollaczek(plan.alpha, plan.eta)


def constant_tail_green(z, b: float):
    """Green's function of the constant sequence ``b_n = b``.

    Root of ``b^2 G^2 - z G + 1 = 0`` on the decaying branch
    ``Im(G) Im(z) < 0`` (``|b G| <= 1``).
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise ValueError("constant_tail_green needs Im(z) != 0")
    r = np.sqrt(z * z - 4 * b * b)
    g1 = (z + r) / (2 * b * b)
    g2 = (z - r) / (2 * b * b)
    # the two roots multiply to 1/b^2; exactly one lies inside |bG| < 1
    out = np.where(np.abs(g1) <= np.abs(g2), g1, g2)
    return complex(out) if out.ndim == 0 else out


def _bvals(b, N):
    get = _bfun(b)
    return get(1, N)


def stitched_green(b, plan: StitchPlan, z) -> GreenEvaluation:
    """``G_N(z)``: exact levels ``1..N`` on top of the terminator tail.

    ``b`` is a sequence or an array ``[b_0, b_1, ..., b_M]`` with ``M >= N``.
    """
    z = complex(z)
    if z.imag >= 0:
        raise ValueError("stitched_green needs Im(z) < 0")
    N = plan.N
    levels = _bvals(b, N)
    meta = {"terminator": plan.terminator}
    depth = tol = None
    if plan.terminator == "MP":
        ms = terminator_sequence(plan)
        res = descent_green(ms, z, N=N, offset=N, tol=plan.tol, budget=plan.depth_budget)
        g = complex(res.value)
        depth, tol = res.depth, res.tolerance
        meta.update(alpha=plan.alpha, eta=plan.eta)
    else:
        g = constant_tail_green(z, float(levels[-1]))
        tol = 0.0
    try:
        val = apply_levels(z, levels, g)
    except SingularLevel as exc:
        raise SingularLevel(f"stitched evaluation hit a pole at level {exc.level}", level=exc.level) from None
    return GreenEvaluation(z, complex(val), f"stitch-{plan.terminator}", N, depth, tol, metadata=meta)


# ---------------------------------------------------------------------------
# zero frequency


def zero_freq_stitched(b, plan: StitchPlan) -> complex:
    """Stitched ``G_N(-i0+)`` from products.

    At ``z = 0`` the levels obey ``G^{(n-1)} G^{(n)} = -1/b_n^2``, so

        G = (b_N/b_{N,s})^{+-1} (G_s(-i0+)/Pi_{N,s}) Pi_N

    with ``+`` for even and ``-`` for odd ``N``.  For the constant tail
    ``G_s^{(N)}(-i0+) = i/b_N`` and the result is ``i Pi_N``.
    """
    N = plan.N
    if N < 2:
        raise ValueError("N must be >= 2")
    logPi = float(log_pi_values(b, [N])[0])
    if plan.terminator == "Constant":
        return 1j * math.exp(logPi)
    ms = terminator_sequence(plan)
    Gs = mp_pi_limit(plan.alpha, plan.eta)
    logPis = float(log_pi_values(ms, [N])[0])
    bN = float(_bvals(b, N)[-1])
    bNs = ms(N)
    sgn = 1 if N % 2 == 0 else -1
    return Gs * math.exp(sgn * (math.log(bN) - math.log(bNs)) + logPi - logPis)


def zero_freq_direct(b, N: int, g_tail: complex) -> complex:
    """Iterate ``G^{(n-1)} = -1/(b_n^2 G^{(n)})`` from ``G^{(N)} = g_tail`` down to level 0."""
    levels = _bvals(b, N)
    g = complex(g_tail)
    for n in range(N, 0, -1):
        g = -1.0 / (levels[n - 1] ** 2 * g)
    return g


# ---------------------------------------------------------------------------
# error bounds


@dataclass(frozen=True)
class ErrorBoundReport:
    """A bound on ``|G_N - G|``.

    Attributes:
        kind: ``FiniteIm`` or ``ZeroFreq``.
        value: the bound (``inf`` for a divergent tail).
        M_constant: the constant used by the zero-frequency bound.
        certified: whether the horizon checks passed.
        classification: tail class of the summand (zero-frequency bound).
        inputs_summary: level, horizon and partial sums.
    """

    kind: str
    value: float
    M_constant: float | None = None
    certified: bool = True
    classification: str | None = None
    inputs_summary: dict[str, Any] = field(default_factory=dict)


def finite_im_bound_value(sup_db: float, z) -> float:
    """``2 sup|b_s - b| / |Im z|^2``."""
    return 2.0 * float(sup_db) / complex(z).imag ** 2


def _delta(b, b_s, lo, hi):
    return _bfun(b)(lo, hi), _bfun(b_s)(lo, hi)


def error_bound_finite_im(b, b_s, z, N: int, horizon: int | None = None, strict: bool = True) -> ErrorBoundReport:
    """Worst-case bound ``2/|Im z|^2 sup_{n>N} |b_{n,s} - b_n|`` off the real axis.

    The supremum is taken over ``N < n <= horizon`` (default ``64 N``).  It is
    certified when it is attained in the first half of the window and
    ``|Delta b_n|`` is nonincreasing on the second half; otherwise
    :class:`HorizonError` is raised (or ``certified=False`` with
    ``strict=False``).
    """
    z = complex(z)
    if z.imag == 0:
        raise ValueError("finite-Im bound needs Im(z) != 0")
    H = 64 * N if horizon is None else int(horizon)
    if H <= N + 1:
        raise HorizonError("horizon must exceed N + 1")
    bb, bs = _delta(b, b_s, N + 1, H)
    d = np.abs(bs - bb)
    sup = float(np.max(d))
    half = d.size // 2
    certified = bool(sup == 0.0 or (np.argmax(d) < half and np.all(np.diff(d[half:]) <= 1e-15 * max(sup, 1.0))))
    if not certified and strict:
        raise HorizonError(f"cannot certify sup|Delta b| on ({N}, {H}]; extend the horizon")
    return ErrorBoundReport("FiniteIm", finite_im_bound_value(sup, z), certified=certified,
                            inputs_summary={"N": N, "horizon": H, "sup_delta_b": sup, "argmax": int(N + 1 + np.argmax(d))})


def _tail_from_blocks(inc: np.ndarray, tail: TailClass, j_last: int) -> float:
    """Estimate ``sum_{j > j_last} I_j`` from the last block increments."""
    if tail.kind == "divergent":
        return float("inf")
    last = float(abs(inc[-1]))
    if last == 0.0:
        return 0.0
    r = tail.growth
    if 0 < r < 0.9:
        return last * r / (1 - r)
    q = tail.q
    if not np.isfinite(q) or q <= 1.0:
        return float("inf")
    C = last * j_last ** q
    return C * j_last ** (1 - q) / (q - 1)


def _zero_freq_sum(b, b_s, N, H):
    bb, bs = _delta(b, b_s, N + 1, H)
    terms = np.abs(bs - bb) / bb
    S = float(np.sum(terms))
    edges = _dyadic_edges(N + 1, H)
    # block sums of the summand over doublings inside (N, H]
    cs = np.concatenate(([0.0], np.cumsum(terms)))
    idx = np.clip(edges - (N + 1), 0, terms.size)
    inc = np.diff(cs[idx])
    j0 = int(round(math.log2(edges[0]))) + 1 if edges.size else 1
    tail = classify_increments(inc, j0=j0, scale=max(S, 1e-300)) if inc.size else TailClass("marginal", float("nan"), float("nan"), 0)
    rest = _tail_from_blocks(inc, tail, j0 + inc.size - 1) if inc.size else float("inf")
    return S, rest, tail


def error_bound_zero_freq(b, b_s, N: int, horizon: int | None = None, M: float = 1.0) -> ErrorBoundReport:
    """Bound ``2M sum_{n>N} |b_{n,s} - b_n| / b_n`` on the zero-frequency error.

    The sum runs to ``horizon`` (default ``64 N``) and the remainder is
    estimated from the decay class of the dyadic block sums.  A divergent or
    too-slowly decaying summand gives an infinite bound: the stitched
    approximant is then not guaranteed to converge uniformly.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    H = 64 * N if horizon is None else int(horizon)
    if H <= N:
        raise HorizonError("horizon must exceed N")
    S, rest, tail = _zero_freq_sum(b, b_s, N, H)
    total = S + rest
    value = 2.0 * M * total if np.isfinite(total) else float("inf")
    return ErrorBoundReport("ZeroFreq", value, M_constant=float(M), certified=bool(np.isfinite(value)),
                            classification=tail.kind,
                            inputs_summary={"N": N, "horizon": H, "partial_sum": S, "tail_estimate": rest,
                                            "q": tail.q, "note": CONJECTURAL_NOTE})


def calibrate_zero_freq_M(measured_error: float, b, b_s, N: int, horizon: int | None = None) -> float:
    """Choose ``M`` so the bound equals one measured error at level ``N`` (heuristic)."""
    rep = error_bound_zero_freq(b, b_s, N, horizon, M=1.0)
    if not np.isfinite(rep.value) or rep.value == 0:
        raise ValueError("cannot calibrate M against a zero or infinite sum")
    return float(measured_error / rep.value)


def _log_c_zero(levels: np.ndarray, c0: float) -> np.ndarray:
    """``log c_n(0)`` for ``n = 0..len(levels)`` from the equality case at ``y = 0``.

    ``c_n(0) = c_{n-2}(0) b_{n-1}/b_n`` with ``c_0 = |G(-i0+)|`` and ``c_1 = 1/b_1``.
    """
    b = np.concatenate(([1.0], levels))
    lc = np.empty(b.size)
    lc[0] = math.log(c0)
    lc[1] = -math.log(b[1])
    steps = np.log(b[1:-1]) - np.log(b[2:])      # log(b_{n-1}/b_n), n = 2..
    lc[2::2] = lc[0] + np.cumsum(steps[0::2])
    lc[3::2] = lc[1] + np.cumsum(steps[1::2])
    return lc


def cauchy_product_M(b, b_s, N: int, G0: float, GN: float | None = None, horizon: int | None = None) -> float:
    """Measured constant ``M = max_{N<n<=H} b_n c_n(0) c_{n-1}(0;N)`` (both orderings).

    ``M`` is the constant that bounds products of the exact and stitched
    Cauchy transforms on the lower imaginary axis; at ``y = 0`` those products
    follow from the coefficients alone, given ``c_0 = |G(-i0+)|`` (``G0``)
    and the stitched ``|G_N(-i0+)|`` (``GN``, computed when omitted).
    """
    H = 64 * N if horizon is None else int(horizon)
    exact = _bfun(b)(1, H)
    stitched = np.concatenate((exact[:N], _bfun(b_s)(N + 1, H)))
    if GN is None:
        GN = abs(zero_freq_direct(stitched_array(exact[:N], b_s, N), N, _tail_zero(b_s, N)))
    lc = _log_c_zero(exact, float(G0))
    ls = _log_c_zero(stitched, float(GN))
    n = np.arange(N + 1, H + 1)
    lb = np.log(exact[N:])
    m1 = lb + lc[n] + ls[n - 1]
    m2 = lb + lc[n - 1] + ls[n]
    return float(np.exp(max(m1.max(), m2.max())))


def stitched_array(head: np.ndarray, b_s, N: int) -> np.ndarray:
    """``[1, b_1..b_N]`` for the stitched sequence up to level ``N``."""
    return np.concatenate(([1.0], np.asarray(head, dtype=float)[:N]))


def _tail_zero(b_s, N: int) -> complex:
    """Level-``N`` zero-frequency Green's function of an MP terminator sequence."""
    if not (isinstance(b_s, CoeffSequence) and b_s.kind.value == "MeixnerPollaczek"):
        raise ValueError("pass GN explicitly for non-MP terminators")
    a, e = b_s.params["alpha"], b_s.params["eta"]
    Gs = mp_pi_limit(a, e)
    logPi = float(log_pi_values(b_s, [N])[0])
    bN = b_s(N)
    if N % 2 == 0:
        return Gs / (bN * math.exp(logPi))
    return -math.exp(logPi) / (bN * Gs)


# ---------------------------------------------------------------------------
# asymptotic error series


@dataclass(frozen=True)
class StitchErrorEstimate:
    """``c * sum_{n>N} (b_n - b_{n,s}) (-1)^n / b_n`` with tail control."""

    estimate: float
    raw_sum: float
    fitted_c: float
    tail_bound: float
    alternating: bool
    flags: tuple = ()

    def __iter__(self):
        yield self.estimate
        yield self.fitted_c


def stitch_error_series(b, b_s, N: int, horizon: int | None = None, c: float | None = None,
                        reference: tuple[float, float] | None = None) -> StitchErrorEstimate:
    """Leading-order zero-frequency stitching error ``c sum_{n>N} (-1)^n Delta b_n / b_n``.

    Args:
        b, b_s: exact and terminator sequences.
        N: stitch level.
        horizon: last index summed (default ``64 N``).
        c: prefactor; if omitted it is calibrated from ``reference``.
        reference: ``(raw_sum_ref, measured_error_ref)`` used to fix ``c``
            once (``c = measured/raw``); defaults to ``c = 1``.

    When the summand alternates with decreasing magnitude the remainder is
    bounded by the first omitted term; otherwise the remainder is extrapolated
    from the last dyadic blocks and the result is flagged ``non-alternating``.
    """
    H = 64 * N if horizon is None else int(horizon)
    if H <= N + 2:
        raise HorizonError("horizon must exceed N + 2")
    bb, bs = _delta(b, b_s, N + 1, H + 1)
    n = np.arange(N + 1, H + 2)
    sign = np.where(n % 2 == 0, 1.0, -1.0)
    terms = sign * (bb - bs) / bb
    body, nxt = terms[:-1], terms[-1]
    raw = float(np.sum(body))
    flags = []
    tail_tol = 1e-12 * max(np.max(np.abs(body)), 1e-300)
    alt = bool(np.all(body[:-1] * body[1:] <= 0)) and bool(np.all(np.diff(np.abs(body[-64:])) <= tail_tol))
    if alt:
        tail_bound = float(abs(nxt))
    else:
        flags.append("non-alternating")
        edges = _dyadic_edges(N + 1, H)
        cs = np.concatenate(([0.0], np.cumsum(body)))
        inc = np.diff(cs[np.clip(edges - (N + 1), 0, body.size)])
        if inc.size >= 2:
            tail = classify_increments(inc, j0=int(round(math.log2(edges[0]))) + 1)
            rest = _tail_from_blocks(inc, tail, int(round(math.log2(edges[-1]))))
            if np.isfinite(rest):
                raw += math.copysign(rest, inc[-1])
            tail_bound = rest
        else:
            tail_bound = float("inf")
    if c is None:
        c = 1.0
        if reference is not None:
            r0, m0 = reference
            if r0 == 0:
                raise ValueError("reference sum is zero")
            c = float(m0 / r0)
    return StitchErrorEstimate(float(c * raw), raw, float(c), tail_bound, alt, tuple(flags))
