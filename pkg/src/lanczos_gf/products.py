"""Alternating coefficient products, the spectral value at the origin and diffusion.

The product

    Pi_n = (1/b_n) prod_{k <= n/2} b_{2k}^2 / b_{2k-1}^2

gives the zero-frequency Green's function ``G(-i0+) = i lim Pi_n`` when the
limit exists.  Products are accumulated as sums of ``log1p`` ratios, so even
``n`` of order 10^8 is cheap and exact to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .fitting import TailClass, classify_increments
from .sequences import CoeffSequence

__all__ = [
    "ProductTrace",
    "log_pi_values",
    "pi_product",
    "pi_trace",
    "mp_pi_limit",
    "SpectralOrigin",
    "spectral_origin",
    "DiffusionEstimate",
    "diffusion_estimate",
    "CriterionResult",
    "convergence_criterion",
    "DiracDeltaResult",
    "dirac_delta_test",
    "CONJECTURAL_NOTE",
]

CONJECTURAL_NOTE = ("zero-frequency values assume that the N -> infinity and z -> -i0+ limits "
                    "commute; they are conjectural, not proven")

_CHUNK = 1 << 20


def _bfun(seq) -> Callable[[int, int], np.ndarray]:
    """Return ``f(lo, hi) -> b_lo..b_hi`` for a sequence or a ``[b_0, b_1, ...]`` array."""
    if isinstance(seq, CoeffSequence):
        return lambda lo, hi: seq.values(np.arange(lo, hi + 1))
    arr = np.asarray(seq, dtype=float)

    def get(lo, hi):
        if hi >= arr.size:
            raise IndexError(f"coefficient index {hi} beyond table of length {arr.size - 1}")
        return arr[lo: hi + 1]
    return get


def log_pi_values(seq, ns) -> np.ndarray:
    """``log Pi_n`` at the requested indices, streaming the pair sums in chunks.

    ``seq`` is a :class:`CoeffSequence` or an array ``[b_0, b_1, ..., b_N]``.
    """
    ns = np.asarray(ns, dtype=np.int64)
    if ns.size == 0:
        return np.zeros(0)
    if np.min(ns) < 1:
        raise ValueError("Pi_n needs n >= 1")
    get = _bfun(seq)
    order = np.argsort(ns, kind="stable")
    sorted_n = ns[order]
    kmax = int(sorted_n[-1] // 2)
    # cumulative pair sum S_K = sum_{k<=K} log(b_2k / b_2k-1), evaluated at K = n//2
    targets = sorted_n // 2
    S_at = np.zeros(sorted_n.size)
    acc = 0.0
    pos = 0
    while pos < targets.size and targets[pos] == 0:
        pos += 1
    k0 = 1
    while k0 <= kmax and pos < targets.size:
        k1 = min(k0 + _CHUNK - 1, kmax)
        b = get(2 * k0 - 1, 2 * k1)
        odd, even = b[0::2], b[1::2]
        terms = np.log1p((even - odd) / odd)
        csum = acc + np.cumsum(terms)
        while pos < targets.size and targets[pos] <= k1:
            S_at[pos] = csum[targets[pos] - k0]
            pos += 1
        acc = float(csum[-1])
        k0 = k1 + 1
    bn = np.array([get(int(n), int(n))[0] for n in sorted_n]) if sorted_n.size < 64 else _gather(get, sorted_n)
    out_sorted = 2.0 * S_at - np.log(bn)
    out = np.empty_like(out_sorted)
    out[order] = out_sorted
    return out


def _gather(get, ns):
    lo, hi = int(ns.min()), int(ns.max())
    if hi - lo < 4 * _CHUNK:
        block = get(lo, hi)
        return block[ns - lo]
    return np.array([get(int(n), int(n))[0] for n in ns])


@dataclass(frozen=True)
class ProductTrace:
    """Running ``log Pi_n`` for ``n = 1..n_max``.

    Every ``Pi_n`` is positive for positive coefficients, so no sign needs
    tracking; ``parity`` records ``n mod 2`` for the two interleaved branches.
    """

    n: np.ndarray
    log_values: np.ndarray

    @property
    def n_max(self) -> int:
        return int(self.n[-1])

    @property
    def parity(self) -> np.ndarray:
        return self.n % 2

    def values(self) -> np.ndarray:
        return np.exp(self.log_values)


def pi_trace(seq, n_max: int) -> ProductTrace:
    """All ``log Pi_n`` for ``n = 1..n_max`` (held in memory)."""
    get = _bfun(seq)
    b = np.concatenate(([1.0], get(1, n_max)))
    n = np.arange(1, n_max + 1)
    ratio = np.zeros(n_max // 2 + 1)
    k = np.arange(1, n_max // 2 + 1)
    ratio[1:] = np.log1p((b[2 * k] - b[2 * k - 1]) / b[2 * k - 1])
    S = np.cumsum(ratio)
    return ProductTrace(n=n, log_values=2.0 * S[n // 2] - np.log(b[1:]))


def pi_product(seq, n: int) -> float:
    """``Pi_n`` for a single ``n``."""
    return float(np.exp(log_pi_values(seq, [n])[0]))


def mp_pi_limit(alpha: float, eta: float) -> complex:
    """Zero-frequency value ``i 2^(eta-2) Gamma(eta/2)^2 / (alpha Gamma(eta))`` of the MP family."""
    if not (alpha > 0 and eta > 0):
        raise ValueError("alpha and eta must be positive")
    logv = (eta - 2) * math.log(2) + 2 * special.gammaln(eta / 2) - special.gammaln(eta) - math.log(alpha)
    return 1j * math.exp(logv)


# ---------------------------------------------------------------------------
# classification of accumulated sums over dyadic blocks


def _dyadic_edges(n_lo: int, n_max: int) -> np.ndarray:
    j0 = max(int(math.ceil(math.log2(max(n_lo, 2)))), 1)
    j1 = int(math.floor(math.log2(n_max)))
    return 2 ** np.arange(j0, j1 + 1, dtype=np.int64)


def _block_sums(term: Callable[[np.ndarray], np.ndarray], edges: np.ndarray) -> np.ndarray:
    """``sum_{n in [e_j, e_{j+1})} term(n)`` streamed in chunks."""
    out = np.zeros(edges.size - 1)
    for j in range(edges.size - 1):
        lo, hi = int(edges[j]), int(edges[j + 1])
        acc = 0.0
        for a in range(lo, hi, _CHUNK):
            nn = np.arange(a, min(a + _CHUNK, hi), dtype=np.float64)
            acc += float(np.sum(term(nn)))
        out[j] = acc
    return out


@dataclass(frozen=True)
class CriterionResult:
    """Outcome of :func:`convergence_criterion`.

    ``classification`` is ``finite-nonzero``, ``divergent`` (product grows
    without bound), ``vanishing`` (product tends to zero) or ``marginal``.
    """

    classification: str
    checkpoints: np.ndarray
    accumulated: np.ndarray
    tail: TailClass
    ratio_max: float
    flags: tuple = ()


def convergence_criterion(f, s, n_max: int = 1 << 24, n_min: int = 2) -> CriterionResult:
    """Classify ``sum_n s_n / f_n`` over dyadic checkpoints.

    ``f`` and ``s`` are vectorised callables of ``n`` (float array) or arrays
    indexed from ``n = 1``.  A convergent sum means a finite, nonzero limit of
    ``Pi_n``; a divergent sum means ``Pi_n -> infinity`` for ``s > 0`` and
    ``Pi_n -> 0`` for ``s < 0``.  Fewer than four doublings give ``marginal``.
    """
    fs = _as_callable(f)
    ss = _as_callable(s)
    if not callable(f):
        n_max = min(n_max, np.asarray(f).size)
    if not callable(s):
        n_max = min(n_max, np.asarray(s).size)
    edges = _dyadic_edges(n_min, n_max)
    if edges.size < 2:
        return CriterionResult("marginal", edges, np.zeros(0), TailClass("marginal", float("nan"), float("nan"), 0),
                               float("nan"), ("insufficient-range",))
    inc = _block_sums(lambda nn: ss(nn) / fs(nn), edges)
    acc = np.cumsum(inc)
    probe = edges[-2:].astype(float)
    ratio = float(np.max(np.abs(ss(probe) / fs(probe))))
    flags = []
    if ratio > 0.5:
        flags.append("staggering-not-small")
    tail = classify_increments(inc, j0=int(math.log2(edges[0])) + 1, scale=max(np.max(np.abs(acc)), 1e-300))
    if tail.kind == "convergent":
        cls = "finite-nonzero"
    elif tail.kind == "divergent":
        cls = "divergent" if acc[-1] > 0 else "vanishing"
    else:
        cls = "marginal"
    return CriterionResult(cls, edges[1:], acc, tail, ratio, tuple(flags))


def _as_callable(x):
    if callable(x):
        return lambda nn: np.asarray(x(nn), dtype=float) + np.zeros_like(nn)
    arr = np.asarray(x, dtype=float)
    return lambda nn: arr[nn.astype(np.int64) - 1]


# ---------------------------------------------------------------------------
# spectral value at the origin and diffusion


@dataclass(frozen=True)
class SpectralOrigin:
    """``i Pi_N`` with its parity partner and the two-parity mean.

    Attributes:
        N: level.
        raw: ``i Pi_N``.
        partner: ``i Pi_{N+1}``.
        averaged: ``(raw + partner)/2``, the headline value.
        spread: ``|raw - partner|/2`` (error bar from the parity oscillation).
        classification: trend of ``log Pi`` over dyadic checkpoints up to ``N``.
        note: caveat on the limit interchange.
    """

    N: int
    raw: complex
    partner: complex
    averaged: complex
    spread: float
    classification: str
    note: str = CONJECTURAL_NOTE


def _trend(seq, N: int) -> str:
    edges = _dyadic_edges(4, N)
    if edges.size < 5:
        return "marginal"
    # even indices remove the parity oscillation from the trend
    lp = log_pi_values(seq, edges)
    inc = np.diff(lp)
    tail = classify_increments(inc, j0=int(math.log2(edges[0])) + 1, scale=1.0)
    if tail.kind == "convergent":
        return "finite-nonzero"
    if tail.kind == "divergent":
        return "divergent" if lp[-1] > lp[0] else "vanishing"
    return "marginal"


def spectral_origin(seq, N: int, classify: bool = True) -> SpectralOrigin:
    """Zero-frequency Green's function estimate ``i Pi_N`` with parity averaging."""
    if N < 2:
        raise ValueError("N must be >= 2")
    a, b = np.exp(log_pi_values(seq, [N, N + 1]))
    raw, partner = 1j * a, 1j * b
    cls = _trend(seq, N + 1) if classify else "unclassified"
    return SpectralOrigin(N, raw, partner, (raw + partner) / 2, float(abs(a - b) / 2), cls)


@dataclass(frozen=True)
class DiffusionEstimate:
    """``D_N = norm_ratio * Pi_N`` over a range of ``N``.

    ``twoD`` is reported alongside ``D`` because quoted reference values
    differ by a factor of two depending on the current convention.
    ``D_avg`` is the two-parity mean ``(D_{N-1} + D_N)/2`` (NaN at the first
    entry).
    """

    N: np.ndarray
    D: np.ndarray
    norm_ratio: float
    D_avg: np.ndarray
    convention_note: str = "columns D and 2D are both reported; see README for the current normalisation"
    note: str = CONJECTURAL_NOTE

    @property
    def twoD(self) -> np.ndarray:
        return 2.0 * self.D

    def tail_mean(self, last: int = 6, doubled: bool = True) -> float:
        vals = self.D_avg[-last:]
        return float(np.mean(vals) * (2.0 if doubled else 1.0))


def diffusion_estimate(b, N=None, norm_ratio: float = 1.0) -> DiffusionEstimate:
    """Diffusion-constant series from coefficients.

    Args:
        b: sequence or array ``[b_0, b_1, ..., b_M]``.
        N: indices to report (default ``1..M`` for arrays).
        norm_ratio: ``<j,j>/<q,q>`` for the current and charge densities.
    """
    if norm_ratio < 0:
        raise ValueError("norm_ratio must be >= 0")
    if N is None:
        if isinstance(b, CoeffSequence):
            raise ValueError("N is required for closed-form sequences")
        N = np.arange(1, np.asarray(b).size)
    N = np.atleast_1d(np.asarray(N, dtype=np.int64))
    logs = log_pi_values(b, N)
    D = norm_ratio * np.exp(logs)
    prev_n = np.maximum(N - 1, 1)
    Dp = norm_ratio * np.exp(log_pi_values(b, prev_n))
    D_avg = np.where(N > 1, (D + Dp) / 2, np.nan)
    return DiffusionEstimate(N=N, D=D, norm_ratio=float(norm_ratio), D_avg=D_avg)


# ---------------------------------------------------------------------------
# point mass at zero frequency


@dataclass(frozen=True)
class DiracDeltaResult:
    """Partial sums of ``p_n(0)^2`` and the resulting verdict.

    ``verdict`` is ``delta`` (sum converges; ``weight`` = 1/sum estimates the
    point mass at zero), ``no-delta`` or ``marginal``.
    """

    n: np.ndarray
    partial_sums: np.ndarray
    verdict: str
    weight: float
    tail: TailClass
    notes: tuple = field(default=())


def dirac_delta_test(seq, N: int) -> DiracDeltaResult:
    """Test for a zero-frequency point mass from ``sum_n p_n(0)^2``.

    Odd terms vanish by parity and the even ones follow from the products,
    ``p_{2n}(0)^2 = 1/(b_{2n} Pi_{2n})``.  Partial sums are reported at the
    even indices ``2, 4, ..., N``.
    """
    if N < 10:
        raise ValueError("N must be >= 10")
    tr = pi_trace(seq, N)
    even = tr.n[tr.n % 2 == 0]
    get = _bfun(seq)
    b_even = get(2, even[-1])[even - 2]
    log_terms = -(tr.log_values[even - 1] + np.log(b_even))
    terms = np.exp(log_terms)
    sums = 1.0 + np.cumsum(terms)  # p_0(0)^2 = 1
    edges = _dyadic_edges(2, int(even[-1]))
    idx = edges // 2 - 1
    inc = np.diff(sums[idx])
    tail = classify_increments(inc, j0=int(math.log2(edges[0])) + 1, scale=float(sums[-1]))
    notes = []
    if log_terms[-1] > log_terms[len(log_terms) // 2] + 1.0:
        notes.append("terms grow: products tend to zero")
    if tail.kind == "convergent":
        verdict, weight = "delta", float(1.0 / sums[-1])
    elif tail.kind == "divergent":
        verdict, weight = "no-delta", 0.0
    else:
        verdict, weight = "marginal", float("nan")
    return DiracDeltaResult(even, sums, verdict, weight, tail, tuple(notes))
