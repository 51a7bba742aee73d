"""Continued-fraction evaluation of ``G(z) = <O, (z - L)^{-1} O>``.

Level ``n`` Green's functions obey ``G^{(n-1)} = 1/(z - b_n^2 G^{(n)})`` with
``G^{(0)} = G``.  Composing ``N`` such Mobius levels gives

    G = (q_N - b_N q_{N-1} g) / (p_N - b_N p_{N-1} g),   g = G^{(N)},

where ``p_n`` and ``q_n`` are the primary and secondary polynomials.  This
module evaluates the polynomials, the truncation approximant (``g = 0``), the
downward "descent" evaluation from an asymptotic seed, and the column of Cauchy
transforms ``C_n = p_n G - q_n``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .sequences import CoeffSequence, SequenceKind

logger = logging.getLogger(__name__)

__all__ = [
    "SingularLevel",
    "NonConvergence",
    "mobius_apply",
    "apply_levels",
    "PolyPair",
    "poly_eval",
    "truncated_green",
    "DescentResult",
    "descent_green",
    "CauchyColumn",
    "cauchy_column",
    "mp_spectral_density",
    "mp_green_quadrature",
    "DESCENT_BUDGET",
]

DESCENT_BUDGET = 1 << 20
_RESCALE_EXP = 512
_RESCALE_LIMIT = 2.0 ** _RESCALE_EXP


class SingularLevel(ArithmeticError):
    """A Mobius level hit a pole (``z - b^2 g = 0``)."""

    def __init__(self, msg, level=None):
        super().__init__(msg)
        self.level = level


class NonConvergence(RuntimeError):
    """An adaptive evaluation did not reach its tolerance within budget."""


def mobius_apply(z: complex, b: float, g: complex) -> complex:
    """One level of the continued fraction: ``1/(z - b^2 g)``."""
    den = z - b * b * g
    if den == 0:
        raise SingularLevel(f"pole at z={z!r}, b={b!r}")
    return 1.0 / den


def apply_levels(z, b_levels: np.ndarray, g):
    """Apply levels ``b_levels[-1], ..., b_levels[0]`` upward to the tail value ``g``.

    ``b_levels[j]`` is the coefficient entering level ``j+1``; the result is
    ``M_1(M_2(...M_m(g)))``.  ``z`` and ``g`` may be arrays (broadcast).
    """
    z = np.asarray(z, dtype=complex)
    g = np.asarray(g, dtype=complex) + np.zeros_like(z)
    b2 = np.asarray(b_levels, dtype=float) ** 2
    scalar = g.ndim == 0
    if scalar:
        zz, gg = complex(z), complex(g)
        for j in range(b2.size - 1, -1, -1):
            den = zz - b2[j] * gg
            if den == 0:
                raise SingularLevel(f"pole at level {j + 1}", level=j + 1)
            gg = 1.0 / den
        return gg
    for j in range(b2.size - 1, -1, -1):
        den = z - b2[j] * g
        if np.any(den == 0):
            raise SingularLevel(f"pole at level {j + 1}", level=j + 1)
        g = 1.0 / den
    return g


# ---------------------------------------------------------------------------
# polynomials


@dataclass(frozen=True)
class PolyPair:
    """Values ``p_0..p_N`` and ``q_0..q_N`` at a point ``z``.

    Entries are stored scaled: the true value is ``p[n] * 2**exponent[n]``
    (same for ``q``), which keeps large ``N`` free of overflow while leaving
    every ratio untouched.
    """

    z: complex
    b: np.ndarray
    p: np.ndarray
    q: np.ndarray
    exponent: np.ndarray

    def true_p(self) -> np.ndarray:
        return self.p * np.exp2(self.exponent.astype(self.b.dtype))

    def true_q(self) -> np.ndarray:
        return self.q * np.exp2(self.exponent.astype(self.b.dtype))

    def wronskian(self) -> np.ndarray:
        """``b_{n+1}(q_{n+1} p_n - q_n p_{n+1})`` for ``n = 0..N-1`` (should be 1)."""
        p, q, e = self.p, self.q, self.exponent.astype(self.b.dtype)
        w = self.b[1:] * (q[1:] * p[:-1] - q[:-1] * p[1:])
        return w * np.exp2(e[1:] + e[:-1])


def poly_eval(seq: CoeffSequence | np.ndarray, z: complex, N: int, precision: str = "double") -> PolyPair:
    """Primary and secondary polynomials at ``z`` by the three-term recurrence.

    ``p_{-1} = 0, p_0 = 1``; ``q_0 = 0, q_1 = 1/b_1``.  With
    ``precision="extended"`` the recurrence runs in ``np.clongdouble``; the
    Wronskian check loses roughly ``|p_N|^2 b_N`` ulps, so long runs at large
    ``|Im z|`` need it.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    rdt, cdt = _precision_types(precision)
    b = seq.array(N, dtype=rdt) if isinstance(seq, CoeffSequence) else np.asarray(seq, dtype=rdt)[: N + 1]
    if b.size < N + 1:
        raise ValueError("need b_0..b_N")
    z = cdt(z)
    p = np.zeros(N + 1, dtype=cdt)
    q = np.zeros(N + 1, dtype=cdt)
    ex = np.zeros(N + 1, dtype=np.int64)
    p[0], q[0] = 1, 0
    p[1], q[1] = z / b[1], 1 / b[1]
    pm, pc, qm, qc = p[0], p[1], q[0], q[1]
    shift = 0
    for n in range(1, N):
        pn = (z * pc - b[n] * pm) / b[n + 1]
        qn = (z * qc - b[n] * qm) / b[n + 1]
        pm, pc, qm, qc = pc, pn, qc, qn
        if abs(pc) > _RESCALE_LIMIT:
            pm, pc, qm, qc = (v / _RESCALE_LIMIT for v in (pm, pc, qm, qc))
            shift += _RESCALE_EXP
            # the previous stored entry keeps its own exponent
        p[n + 1], q[n + 1], ex[n + 1] = pc, qc, shift
    return PolyPair(z=complex(z), b=b, p=p, q=q, exponent=ex)


def _precision_types(precision):
    if precision == "double":
        return np.float64, np.complex128
    if precision == "extended":
        return np.longdouble, np.clongdouble
    raise ValueError(f"precision must be 'double' or 'extended', not {precision!r}")


def truncated_green(seq: CoeffSequence | np.ndarray, z, N: int, method: str = "mobius"):
    """Truncation approximant ``G_{N,t}(z) = q_N(z)/p_N(z)`` (tail set to zero).

    ``method="mobius"`` composes the ``N`` levels downward from ``g = 0``,
    which is the same rational function evaluated without cancellation;
    ``method="poly"`` forms the polynomial ratio directly.  ``z`` may be an
    array.
    """
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr.imag == 0):
        raise ValueError("truncated_green needs Im(z) != 0 (the approximant has real poles)")
    b = seq.array(N) if isinstance(seq, CoeffSequence) else np.asarray(seq, dtype=float)[: N + 1]
    if method == "poly":
        out = [(lambda pp: pp.q[N] / pp.p[N])(poly_eval(b, zz, N)) for zz in z_arr.ravel()]
        res = np.array(out).reshape(z_arr.shape)
        return complex(res) if res.ndim == 0 else res
    if method != "mobius":
        raise ValueError(f"unknown method {method!r}")
    # level N sees the tail g = 0, i.e. G^{(N-1)} = 1/z
    return apply_levels(z_arr if z_arr.ndim else complex(z_arr), b[1:N], 1.0 / z_arr if z_arr.ndim else 1.0 / complex(z_arr))


# ---------------------------------------------------------------------------
# descent from an asymptotic seed


@dataclass(frozen=True)
class DescentResult:
    """Result of :func:`descent_green`.

    Attributes:
        value: G at z (array if z was an array).
        depth: last descent depth used.
        tolerance: achieved ``max |G(2M) - G(M)|``.
        converged: whether the tolerance target was met.
        history: ``(depth, change)`` pairs of the doubling schedule.
    """

    value: complex | np.ndarray
    depth: int
    tolerance: float
    converged: bool
    history: tuple = field(default=())


def _seed(z, b_M, b_M1, kind):
    """Approximation of ``G^{(M)}`` from ``b_n G^{(n)} -> -sgn(Im z) i``.

    The ``corrected`` seed adds the first-order term of the fixed point of
    ``r_M = 1/(z/b_M - (b_{M+1}/b_M) r_{M+1})`` with ``r = b G``.
    """
    sigma = -np.sign(np.imag(z))
    r = 1j * sigma
    if kind == "corrected":
        eps = (b_M - b_M1 - 1j * sigma * z) / (2 * b_M1)
        r = 1j * sigma * (1 + eps)
    elif kind != "plain":
        raise ValueError(f"unknown seed kind {kind!r}")
    return r / b_M


def descent_green(seq: CoeffSequence, z, depth: int | None = None, seed: str = "corrected",
                  tol: float = 1e-10, budget: int = DESCENT_BUDGET, N: int = 0,
                  offset: int = 0, raise_on_failure: bool = True) -> DescentResult:
    """Evaluate ``G(z)`` for a closed-form sequence by downward Mobius descent.

    Starting from the asymptotic seed at depth ``M``, apply ``M`` levels upward
    to level 0.  With ``depth=None`` the depth starts at ``max(4N, 64)`` and is
    doubled until successive values differ by less than ``tol``.

    Args:
        seq: coefficient sequence (must be unbounded or long enough).
        z: frequency or array of frequencies with ``Im(z) != 0``.
        depth: fixed depth (no adaptivity) if given.
        seed: ``"corrected"`` (default) or ``"plain"`` (``-sgn(Im z) i/b_M``).
        tol: target change between successive depths.
        budget: maximum depth.
        N: stitch level, only used for the starting depth.
        offset: evaluate the level-``offset`` Green's function of ``seq``, i.e.
            use coefficients ``b_{offset+1}, b_{offset+2}, ...``.
    """
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr.imag == 0):
        raise ValueError("descent_green needs Im(z) != 0; use the zero-frequency formulas on the axis")

    def run(M):
        b = seq.values(np.arange(offset + 1, offset + M + 2))
        g = _seed(z_arr, b[M - 1], b[M], seed)
        return apply_levels(z_arr if z_arr.ndim else complex(z_arr), b[:M], g if z_arr.ndim else complex(g))

    if depth is not None:
        return DescentResult(run(int(depth)), int(depth), float("nan"), True)
    M = max(4 * N, 64)
    prev = run(M)
    history = []
    while True:
        M2 = 2 * M
        if M2 > budget:
            msg = f"descent did not converge to {tol:g} within depth {budget} (last change {history[-1][1] if history else float('nan'):.3g})"
            if raise_on_failure:
                raise NonConvergence(msg)
            logger.warning(msg)
            change = history[-1][1] if history else float("inf")
            return DescentResult(prev, M, change, False, tuple(history))
        cur = run(M2)
        change = float(np.max(np.abs(np.asarray(cur) - np.asarray(prev))))
        history.append((M2, change))
        M, prev = M2, cur
        if change < tol:
            return DescentResult(cur, M, change, True, tuple(history))


# ---------------------------------------------------------------------------
# Cauchy transforms


@dataclass(frozen=True)
class CauchyColumn:
    """``C_n(z) = <O_n, (z - L)^{-1} O_0>`` for ``n = 0..N``.

    Attributes:
        z: evaluation point.
        C: values.
        source: description of where ``G`` came from.
        phase_violation: for ``z = -iy`` the largest of ``|Im c_n|`` and
            ``-Re c_n`` with ``c_n = i^{-(n+1)} C_n`` (NaN off the axis).
        phase_ok: ``phase_violation <= tol``.
    """

    z: complex
    C: np.ndarray
    source: str
    phase_violation: float
    phase_ok: bool

    def phase_reduced(self) -> np.ndarray:
        """``c_n = i^{-(n+1)} C_n`` (real and nonnegative on the lower imaginary axis)."""
        n = np.arange(self.C.size)
        return self.C * (1j ** (-(n + 1) % 4))


def cauchy_column(seq: CoeffSequence | np.ndarray, z: complex, N: int, G: complex,
                  source: str = "exact", tol: float = 1e-8, strict: bool = False) -> CauchyColumn:
    """Forward recurrence ``b_{n+1} C_{n+1} = z C_n - b_n C_{n-1}``.

    Initial values are ``C_0 = G`` and ``C_1 = (zG - 1)/b_1``.  ``C_n`` is the
    minimal solution, so the forward recurrence amplifies any error in ``G``;
    the phase check on the lower imaginary axis detects this.
    """
    b = seq.array(N) if isinstance(seq, CoeffSequence) else np.asarray(seq, dtype=float)[: N + 1]
    z = complex(z)
    C = np.zeros(N + 1, dtype=complex)
    C[0] = G
    if N >= 1:
        C[1] = (z * G - 1.0) / b[1]
    for n in range(1, N):
        C[n + 1] = (z * C[n] - b[n] * C[n - 1]) / b[n + 1]
    violation = float("nan")
    ok = True
    if z.real == 0 and z.imag <= 0:
        n = np.arange(N + 1)
        c = C * (1j ** (-(n + 1) % 4))
        scale = np.maximum(np.abs(c), 1.0)
        violation = float(max(np.max(np.abs(c.imag) / scale), np.max(-c.real / scale), 0.0))
        ok = violation <= tol
        if not ok:
            msg = f"Cauchy phase violated by {violation:.3g} at z={z}"
            if strict:
                raise ArithmeticError(msg)
            logger.info(msg)
    return CauchyColumn(z=z, C=C, source=source, phase_violation=violation, phase_ok=ok)


# ---------------------------------------------------------------------------
# Meixner-Pollaczek reference values


def mp_spectral_density(x, alpha: float = 1.0, eta: float = 1.0):
    """``rho(x) = 2^(eta-2) |Gamma((eta + i x/alpha)/2)|^2 / (pi alpha Gamma(eta))``."""
    x = np.asarray(x, dtype=float)
    lg = special.loggamma((eta + 1j * x / alpha) / 2).real
    return np.exp((eta - 2) * math.log(2) + 2 * lg - math.log(math.pi * alpha) - special.gammaln(eta))


def _mp_cutoff(alpha, eta, tail=1e-12):
    # rho(x) ~ c |x/alpha|^(eta-1) exp(-pi|x|/(2 alpha)); bound the tail mass crudely
    X = 10.0 * alpha
    while True:
        xs = np.linspace(X, 4 * X, 64)
        mass = np.trapezoid(mp_spectral_density(xs, alpha, eta), xs) * 4
        if mass < tail and mp_spectral_density(X, alpha, eta) * X < tail:
            return X
        X *= 1.5


def mp_green_quadrature(z, alpha: float = 1.0, eta: float = 1.0, tail: float = 1e-12) -> complex:
    """``G(z) = int rho(x)/(z - x) dx`` for the Meixner-Pollaczek weight.

    Adaptive quadrature on ``[-X, X]`` with ``X`` chosen so the neglected
    tail mass is below ``tail``.  Independent of any continued fraction.
    """
    z = complex(z)
    if z.imag == 0:
        raise ValueError("quadrature oracle needs Im(z) != 0")
    X = _mp_cutoff(alpha, eta, tail)
    pts = [-X]
    for x in sorted({min(max(z.real, -X), X), 0.0, X}):
        # breakpoints closer than this only produce degenerate subintervals
        if x - pts[-1] > 1e-9 * X:
            pts.append(x)
    pts[-1] = X
    total = 0j
    for lo, hi in zip(pts[:-1], pts[1:]):
        re = integrate.quad(lambda x: (mp_spectral_density(x, alpha, eta) / (z - x)).real, lo, hi,
                            epsabs=1e-14, epsrel=1e-13, limit=400)[0]
        im = integrate.quad(lambda x: (mp_spectral_density(x, alpha, eta) / (z - x)).imag, lo, hi,
                            epsabs=1e-14, epsrel=1e-13, limit=400)[0]
        total += re + 1j * im
    return total


def is_meixner_pollaczek(seq: CoeffSequence) -> bool:
    return seq.kind is SequenceKind.MEIXNER_POLLACZEK
