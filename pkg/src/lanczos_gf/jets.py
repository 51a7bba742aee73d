"""Truncated Taylor series (jets) at z = 0 and jets of the recurrence polynomials.

The polynomials ``p_n`` (``p_{-1} = 0, p_0 = 1``) and ``q_n`` (``q_0 = 0,
q_1 = 1/b_1``) obey ``b_{n+1} x_{n+1} = z x_n - b_n x_{n-1}``.  Writing
``x_n(z) = sum_k c_{n,k} z^k`` gives, order by order,

    c_{n+1,k} = (c_{n,k-1} - b_n c_{n-1,k}) / b_{n+1}.

For fixed ``k`` this is a first-order recurrence inside each parity class of
``n`` with a known forcing term from order ``k-1``, so whole blocks of indices
can be solved with ``cumprod``/``cumsum``.  :func:`poly_jets` streams the index
range in blocks, so memory stays bounded even for ``n`` of order 10^8.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .sequences import CoeffSequence

__all__ = ["Jet", "JetTable", "poly_jets", "DEFAULT_BLOCK"]

DEFAULT_BLOCK = 1 << 16


class Jet:
    """Taylor coefficients ``c_0..c_K`` of a function at ``z = 0``.

    Arithmetic is exact through order ``K``; mixing jets of different orders
    truncates to the smaller one.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        arr = np.array(coeffs)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("jet coefficients must be a non-empty 1-d array")
        self.coeffs = arr

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    @classmethod
    def constant(cls, value, order: int):
        c = np.zeros(order + 1, dtype=np.result_type(value, float))
        c[0] = value
        return cls(c)

    @classmethod
    def variable(cls, order: int):
        """The jet of ``z`` itself."""
        c = np.zeros(order + 1)
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    def _pair(self, other):
        if isinstance(other, Jet):
            k = min(self.order, other.order)
            return self.coeffs[: k + 1], other.coeffs[: k + 1]
        return self.coeffs, None

    def __add__(self, other):
        a, b = self._pair(other)
        if b is None:
            out = a.astype(np.result_type(a, other), copy=True)
            out[0] += other
            return Jet(out)
        return Jet(a + b)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._pair(other)
        if b is None:
            return Jet(a * other)
        k = a.size
        return Jet(np.convolve(a, b)[:k])

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self._pair(other)
        if b is None:
            return Jet(a / other)
        return Jet(_series_divide(a, b))

    def __rtruediv__(self, other):
        return Jet.constant(other, self.order) / self

    def derivative(self, k: int):
        """``k``-th derivative at 0, i.e. ``k! c_k``."""
        return factorial(k) * self.coeffs[k]

    def __call__(self, z):
        return np.polyval(self.coeffs[::-1], z)

    def __repr__(self):
        return f"Jet({self.coeffs!r})"


def _series_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Coefficients of num/den through the common order (den[0] != 0)."""
    if den[0] == 0:
        raise ZeroDivisionError("jet division needs a non-zero constant term")
    dt = np.result_type(num, den)
    out = np.zeros(num.size, dtype=dt)
    for k in range(num.size):
        acc = num[k]
        for j in range(1, k + 1):
            acc = acc - den[j] * out[k - j]
        out[k] = acc / den[0]
    return out


@dataclass(frozen=True)
class JetTable:
    """Jets of ``p_n`` and ``q_n`` at the requested indices.

    Attributes:
        n: requested indices (sorted, unique).
        b: ``b_n`` at those indices (``b_0 = 1``).
        p: array ``(len(n), K+1)`` with ``p[i, k] = c_k`` of ``p_{n[i]}``.
        q: same for ``q``.
    """

    n: np.ndarray
    b: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def row(self, n: int) -> int:
        i = int(np.searchsorted(self.n, n))
        if i >= self.n.size or self.n[i] != n:
            raise KeyError(f"index {n} was not requested")
        return i

    def p_jet(self, n: int) -> Jet:
        return Jet(self.p[self.row(n)])

    def q_jet(self, n: int) -> Jet:
        return Jet(self.q[self.row(n)])


def _solve_block(a, f, seed_even, seed_odd):
    """Solve x_j = a_j x_{j-2} + f_j for one block with x_{-2}, x_{-1} given."""
    out = np.empty_like(f)
    for start, seed in ((0, seed_even), (1, seed_odd)):
        aa = a[start::2]
        ff = f[start::2]
        if aa.size == 0:
            continue
        P = np.cumprod(aa)
        out[start::2] = P * (seed + np.cumsum(ff / P))
    return out


def poly_jets(seq: CoeffSequence | np.ndarray, N: int, K: int, indices=None,
              dtype=np.float64, block: int = DEFAULT_BLOCK) -> JetTable:
    """Taylor coefficients at ``z = 0`` of ``p_n`` and ``q_n`` through order ``K``.

    Parity is exact: ``c_{n,k}`` of ``p_n`` vanishes unless ``k = n mod 2``,
    and for ``q_n`` unless ``k != n mod 2``.

    Args:
        seq: sequence, or an array ``[b_0, b_1, ..., b_N]``.
        N: largest index needed.
        K: jet order.
        indices: indices to keep (default all ``0..N``).
        dtype: ``np.float64`` or ``np.longdouble``.
        block: number of indices per streamed block.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if K < 0:
        raise ValueError("K must be >= 0")
    keep = np.arange(N + 1) if indices is None else np.unique(np.asarray(indices, dtype=np.int64))
    if keep.size and (keep[0] < 0 or keep[-1] > N):
        raise ValueError("requested indices outside 0..N")

    if isinstance(seq, CoeffSequence):
        def bvals(lo, hi):
            return seq.values(np.arange(lo, hi + 1), dtype=dtype)
    else:
        barr = np.asarray(seq, dtype=dtype)
        if barr.size < N + 1:
            raise ValueError("coefficient array shorter than N+1")

        def bvals(lo, hi):
            return barr[lo: hi + 1]

    out_p = np.zeros((keep.size, K + 1), dtype=dtype)
    out_q = np.zeros((keep.size, K + 1), dtype=dtype)
    out_b = np.ones(keep.size, dtype=dtype)

    b1 = bvals(1, 1)[0]
    # rows for n = 0 and n = 1
    prev_p = np.zeros(K + 1, dtype=dtype)
    prev_p[0] = 1
    cur_p = np.zeros(K + 1, dtype=dtype)
    if K >= 1:
        cur_p[1] = 1 / b1
    prev_q = np.zeros(K + 1, dtype=dtype)
    cur_q = np.zeros(K + 1, dtype=dtype)
    cur_q[0] = 1 / b1

    def store(ns, bs, pp, qq):
        lo, hi = np.searchsorted(keep, [ns[0], ns[-1] + 1])
        if hi > lo:
            sel = keep[lo:hi] - ns[0]
            out_p[lo:hi] = pp[sel]
            out_q[lo:hi] = qq[sel]
            out_b[lo:hi] = bs[sel]

    store(np.array([0, 1]), np.array([1, b1], dtype=dtype),
          np.vstack([prev_p, cur_p]), np.vstack([prev_q, cur_q]))

    n0 = 1
    b_prev = b1
    while n0 < N:
        n1 = min(n0 + block, N)
        bb = bvals(n0 + 1, n1)             # b_{n0+1}..b_{n1}
        b_lag = np.concatenate(([b_prev], bb[:-1]))   # b_{n-1} for n = n0+1..n1
        a = -b_lag / bb
        L = bb.size
        P = np.empty((L, K + 1), dtype=dtype)
        Q = np.empty((L, K + 1), dtype=dtype)
        for table, prev, cur in ((P, prev_p, cur_p), (Q, prev_q, cur_q)):
            for k in range(K + 1):
                if k == 0:
                    f = np.zeros(L, dtype=dtype)
                else:
                    lag = np.concatenate(([cur[k - 1]], table[:-1, k - 1]))
                    f = lag / bb
                table[:, k] = _solve_block(a, f, prev[k], cur[k])
        ns = np.arange(n0 + 1, n1 + 1)
        store(ns, bb, P, Q)
        if L >= 2:
            prev_p, cur_p = P[-2].copy(), P[-1].copy()
            prev_q, cur_q = Q[-2].copy(), Q[-1].copy()
        else:
            prev_p, cur_p = cur_p, P[-1].copy()
            prev_q, cur_q = cur_q, Q[-1].copy()
        b_prev = bb[-1]
        n0 = n1

    # enforce the structural parity zeros exactly
    par = (keep % 2)[:, None]
    kk = np.arange(K + 1)[None, :]
    out_p[(kk % 2) != par] = 0
    out_q[(kk % 2) == par] = 0
    return JetTable(n=keep, b=out_b, p=out_p, q=out_q)
