"""Pauli-string algebra for translation-invariant operator densities.

A word is stored as two bitmasks ``(x, z)``: site ``j`` carries
``X`` if only bit ``j`` of ``x`` is set, ``Z`` if only bit ``j`` of ``z`` is
set and ``Y`` if both are.  Words are anchored so that the leftmost
non-identity letter sits on bit 0, which makes every translation class
unique.  A translation-invariant operator ``sum_x T^x(o)`` is represented by
the density ``o`` as arrays of anchored words and amplitudes, kept sorted by
``(x, z)`` so reductions happen in a canonical order.

With ``sigma(x, z) = prod_j i^(x_j z_j) X^x_j Z^z_j`` the product rule is
``sigma(a) sigma(b) = i^phi sigma(a ^ b)`` with
``phi = |a_x a_z| + |b_x b_z| - |c_x c_z| + 2 |a_z b_x|  (mod 4)``.

Words use ``uint64`` masks, so supports up to 64 sites are representable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "MAX_SUPPORT",
    "PauliWord",
    "multiply_words",
    "TranslationInvariantOperator",
    "SpinHamiltonian",
    "mixed_field_ising",
    "commutator_with_hamiltonian",
    "liouvillian_real",
    "inner_product",
    "energy_density",
    "energy_current",
    "ContinuityError",
    "continuity_residual",
]

MAX_SUPPORT = 64
_U = np.uint64
_LETTERS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_PHASES = (1, 1j, -1, -1j)


class ContinuityError(ArithmeticError):
    """Raised when the energy current fails the telescoping check."""


def _popcount(a) -> np.ndarray:
    return np.bitwise_count(a).astype(np.int64)


def _ctz(m: np.ndarray) -> np.ndarray:
    """Trailing-zero count of nonzero uint64 values."""
    low = m & (~m + _U(1))
    return np.round(np.log2(low.astype(np.float64))).astype(np.uint64)


def _bit_length(m: np.ndarray) -> np.ndarray:
    out = np.zeros(m.shape, dtype=np.int64)
    v = m.copy()
    for sh in (32, 16, 8, 4, 2, 1):
        big = v >= (_U(1) << _U(sh))
        out[big] += sh
        v[big] >>= _U(sh)
    out[v > 0] += 1
    return out


def _anchor(x: np.ndarray, z: np.ndarray):
    """Shift words so the lowest occupied site is 0; identity stays (0, 0)."""
    occ = x | z
    nz = occ != 0
    sh = np.zeros_like(x)
    sh[nz] = _ctz(occ[nz])
    return x >> sh, z >> sh


def _product_phase(ax, az, bx, bz, cx, cz) -> np.ndarray:
    return (_popcount(ax & az) + _popcount(bx & bz) - _popcount(cx & cz)
            + 2 * _popcount(az & bx)) % 4


# ---------------------------------------------------------------------------
# words


@dataclass(frozen=True, order=True)
class PauliWord:
    """Canonically anchored Pauli string (first and last letters non-identity)."""

    x: int
    z: int

    def __post_init__(self):
        if self.x < 0 or self.z < 0:
            raise ValueError("masks must be nonnegative")
        occ = self.x | self.z
        if occ and not occ & 1:
            raise ValueError("word is not anchored; use PauliWord.canonical")
        if occ.bit_length() > MAX_SUPPORT:
            raise ValueError(f"support exceeds {MAX_SUPPORT} sites")

    @classmethod
    def canonical(cls, x: int, z: int) -> "PauliWord":
        occ = x | z
        if occ == 0:
            return cls(0, 0)
        sh = (occ & -occ).bit_length() - 1
        return cls(x >> sh, z >> sh)

    @classmethod
    def from_string(cls, s: str) -> "PauliWord":
        """Parse letters such as ``"XIY"``; leading/trailing identities are stripped."""
        x = z = 0
        for j, ch in enumerate(s.upper()):
            if ch not in _LETTERS:
                raise ValueError(f"bad Pauli letter {ch!r}")
            bx, bz = _LETTERS[ch]
            x |= bx << j
            z |= bz << j
        return cls.canonical(x, z)

    @property
    def is_identity(self) -> bool:
        return (self.x | self.z) == 0

    @property
    def length(self) -> int:
        return (self.x | self.z).bit_length()

    @property
    def letters(self) -> str:
        out = []
        for j in range(self.length):
            bx, bz = (self.x >> j) & 1, (self.z >> j) & 1
            out.append("IXZY"[bx + 2 * bz])
        return "".join(out)

    def __str__(self) -> str:
        return self.letters or "I"

    def shifted(self, offset: int) -> tuple[int, int]:
        """Raw masks of the word translated by ``offset >= 0`` sites."""
        return self.x << offset, self.z << offset


def multiply_words(P: PauliWord, Q: PauliWord, offset: int = 0) -> tuple[complex, PauliWord | None]:
    """Product ``P * T^offset(Q)`` as ``(phase, word)``; ``word`` is ``None`` for the identity."""
    base = max(0, -offset)
    ax, az = P.x << base, P.z << base
    bx, bz = Q.x << (base + offset), Q.z << (base + offset)
    cx, cz = ax ^ bx, az ^ bz
    phi = ((ax & az).bit_count() + (bx & bz).bit_count() - (cx & cz).bit_count()
           + 2 * (az & bx).bit_count()) % 4
    if cx | cz == 0:
        return _PHASES[phi], None
    return _PHASES[phi], PauliWord.canonical(cx, cz)


# ---------------------------------------------------------------------------
# operators


def _merge(x, z, amp, tol: float = 0.0):
    """Sort by ``(x, z)``, sum duplicates and drop zeros (canonical order)."""
    if x.size == 0:
        return x, z, amp
    order = np.lexsort((z, x))
    x, z, amp = x[order], z[order], amp[order]
    new = np.empty(x.size, dtype=bool)
    new[0] = True
    new[1:] = (x[1:] != x[:-1]) | (z[1:] != z[:-1])
    starts = np.flatnonzero(new)
    amp = np.add.reduceat(amp, starts)
    x, z = x[starts], z[starts]
    keep = np.abs(amp) > tol
    return x[keep], z[keep], amp[keep]


class TranslationInvariantOperator:
    """Density ``o`` of ``sum_x T^x(o)`` as sorted arrays of anchored words.

    ``amp`` is real when every amplitude is real (the Lanczos driver works in
    that representation) and complex otherwise.
    """

    __slots__ = ("x", "z", "amp", "_norm")

    def __init__(self, x=None, z=None, amp=None, *, canonical: bool = False):
        x = np.zeros(0, dtype=_U) if x is None else np.asarray(x, dtype=_U)
        z = np.zeros(0, dtype=_U) if z is None else np.asarray(z, dtype=_U)
        amp = np.zeros(0) if amp is None else np.asarray(amp)
        if not canonical:
            x, z = _anchor(x, z)
            x, z, amp = _merge(x, z, amp)
        self.x, self.z, self.amp = x, z, amp
        self._norm = None

    @classmethod
    def from_terms(cls, terms: Mapping | Iterable) -> "TranslationInvariantOperator":
        """Build from ``{word: amp}`` (words as :class:`PauliWord` or letter strings)."""
        items = terms.items() if isinstance(terms, Mapping) else terms
        xs, zs, amps = [], [], []
        for w, a in items:
            w = PauliWord.from_string(w) if isinstance(w, str) else w
            if w.is_identity:
                raise ValueError("the identity has no traceless density")
            xs.append(w.x)
            zs.append(w.z)
            amps.append(a)
        amp = np.asarray(amps, dtype=complex if any(np.iscomplexobj(a) for a in amps) else float)
        return cls(np.asarray(xs, dtype=_U), np.asarray(zs, dtype=_U), amp)

    @property
    def terms(self) -> dict[PauliWord, complex]:
        return {PauliWord(int(a), int(b)): v.item() for a, b, v in zip(self.x, self.z, self.amp)}

    def __len__(self) -> int:
        return int(self.x.size)

    def __repr__(self) -> str:
        head = ", ".join(f"{w}: {a:.6g}" for w, a in list(self.terms.items())[:6])
        more = ", ..." if len(self) > 6 else ""
        return f"TranslationInvariantOperator({{{head}{more}}})"

    @property
    def max_support(self) -> int:
        if not len(self):
            return 0
        return int(_bit_length(self.x | self.z).max())

    def norm(self) -> float:
        if self._norm is None:
            self._norm = float(np.sqrt(np.sum(np.abs(self.amp) ** 2)))
        return self._norm

    def scaled(self, c) -> "TranslationInvariantOperator":
        return TranslationInvariantOperator(self.x, self.z, self.amp * c, canonical=True)

    def normalized(self) -> "TranslationInvariantOperator":
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("cannot normalize the zero operator")
        return self.scaled(1.0 / n)

    def __add__(self, other: "TranslationInvariantOperator") -> "TranslationInvariantOperator":
        x, z, a = _merge(np.concatenate([self.x, other.x]), np.concatenate([self.z, other.z]),
                         np.concatenate([self.amp, other.amp]))
        return TranslationInvariantOperator(x, z, a, canonical=True)

    def __sub__(self, other):
        return self + other.scaled(-1)

    def prune(self, threshold: float) -> "TranslationInvariantOperator":
        """Drop amplitudes with ``|a| <= threshold * norm``."""
        if threshold <= 0:
            return self
        keep = np.abs(self.amp) > threshold * self.norm()
        return TranslationInvariantOperator(self.x[keep], self.z[keep], self.amp[keep], canonical=True)

    @property
    def nbytes(self) -> int:
        return int(self.x.nbytes + self.z.nbytes + self.amp.nbytes)


def inner_product(A: TranslationInvariantOperator, B: TranslationInvariantOperator) -> complex:
    """Infinite-temperature inner product per site: ``sum conj(a_A) a_B`` over shared words."""
    if not len(A) or not len(B):
        return 0.0
    x = np.concatenate([A.x, B.x])
    z = np.concatenate([A.z, B.z])
    src = np.concatenate([np.zeros(len(A), dtype=np.int8), np.ones(len(B), dtype=np.int8)])
    amp = np.concatenate([np.conj(A.amp).astype(complex), B.amp.astype(complex)])
    order = np.lexsort((src, z, x))
    x, z, src, amp = x[order], z[order], src[order], amp[order]
    pair = (x[1:] == x[:-1]) & (z[1:] == z[:-1]) & (src[1:] != src[:-1])
    val = complex(np.sum(amp[:-1][pair] * amp[1:][pair]))
    if np.isrealobj(A.amp) and np.isrealobj(B.amp):
        return val.real
    return val


# ---------------------------------------------------------------------------
# Hamiltonians


@dataclass(frozen=True)
class SpinHamiltonian:
    """``H = sum_x T^x(h)`` with local density ``h = sum_k c_k w_k`` (real couplings)."""

    local_terms: tuple[tuple[PauliWord, float], ...]
    name: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        if not self.local_terms:
            raise ValueError("Hamiltonian needs at least one term")
        for w, c in self.local_terms:
            if isinstance(c, complex) or not np.isreal(c):
                raise ValueError("couplings must be real")
            if w.is_identity:
                raise ValueError("identity terms do not contribute to the Liouvillian")

    @classmethod
    def from_terms(cls, terms, name: str = "custom", params=()) -> "SpinHamiltonian":
        out = []
        for w, c in (terms.items() if isinstance(terms, Mapping) else terms):
            w = PauliWord.from_string(w) if isinstance(w, str) else w
            out.append((w, float(c)))
        return cls(tuple(out), name, tuple(params))

    @property
    def range(self) -> int:
        return max(w.length for w, _ in self.local_terms)


def mixed_field_ising(g_z: float = -1.05, g_x: float = 0.5, J: float = 1.0) -> SpinHamiltonian:
    """``H = sum_i J X_i X_{i+1} + g_z Z_i + g_x X_i``."""
    terms = [("XX", J), ("Z", g_z), ("X", g_x)]
    terms = [(w, c) for w, c in terms if c != 0]
    return SpinHamiltonian.from_terms(terms, name="mixed-field-ising",
                                      params=(("J", J), ("g_z", g_z), ("g_x", g_x)))


def _commutator_terms(H: SpinHamiltonian, A: TranslationInvariantOperator):
    """Yield ``(x, z, amp)`` chunks of ``H A - A H`` (raw masks, before anchoring).

    Only anticommuting pairs contribute, each with ``2 c a i^phi``.
    """
    if not len(A):
        return
    lens = _bit_length(A.x | A.z)
    lmax = int(lens.max())
    for w, c in H.local_terms:
        lw = w.length
        if lmax + lw > MAX_SUPPORT:
            raise OverflowError(f"operator support would exceed {MAX_SUPPORT} sites")
        # H term at offset s relative to each A word; overlap needs -lw < s < len(A word)
        for s in range(-lw + 1, lmax):
            live = lens > s
            if not np.any(live):
                continue
            ax, az, amp = A.x[live], A.z[live], A.amp[live]
            if s >= 0:
                hx = np.full(ax.shape, w.x << s, dtype=_U)
                hz = np.full(ax.shape, w.z << s, dtype=_U)
            else:
                hx = np.full(ax.shape, w.x, dtype=_U)
                hz = np.full(ax.shape, w.z, dtype=_U)
                ax, az = ax << _U(-s), az << _U(-s)
            anti = (_popcount((hx & az) ^ (hz & ax)) & 1).astype(bool)
            if not np.any(anti):
                continue
            hx, hz, ax, az, amp = hx[anti], hz[anti], ax[anti], az[anti], amp[anti]
            cx, cz = hx ^ ax, hz ^ az
            phi = _product_phase(hx, hz, ax, az, cx, cz)
            yield cx, cz, phi, 2.0 * c * amp


def _collect(chunks, make_amp, merge_every: int = 8_000_000):
    xs, zs, amps, pending = [], [], [], 0
    for cx, cz, phi, a in chunks:
        cx, cz = _anchor(cx, cz)
        xs.append(cx)
        zs.append(cz)
        amps.append(make_amp(phi, a))
        pending += cx.size
        if pending > merge_every and len(xs) > 1:
            # bound the peak memory by folding duplicates early
            x, z, a = _merge(np.concatenate(xs), np.concatenate(zs), np.concatenate(amps))
            xs, zs, amps, pending = [x], [z], [a], x.size
    if not xs:
        return TranslationInvariantOperator()
    x, z, a = _merge(np.concatenate(xs), np.concatenate(zs), np.concatenate(amps))
    return TranslationInvariantOperator(x, z, a, canonical=True)


def commutator_with_hamiltonian(H: SpinHamiltonian, A: TranslationInvariantOperator) -> TranslationInvariantOperator:
    """Density of ``[H, A]`` (complex amplitudes)."""
    ph = np.asarray(_PHASES)
    return _collect(_commutator_terms(H, A), lambda phi, a: ph[phi] * a)


def liouvillian_real(H: SpinHamiltonian, A: TranslationInvariantOperator) -> TranslationInvariantOperator:
    """Density of ``-i [H, A]`` for real-amplitude (Hermitian) ``A``; stays real.

    For anticommuting Hermitian strings the product phase is odd, so
    ``-i * i^phi = i^(phi-1)`` is ``+1`` (``phi = 1``) or ``-1`` (``phi = 3``).
    """
    if np.iscomplexobj(A.amp):
        raise TypeError("liouvillian_real needs real amplitudes")
    return _collect(_commutator_terms(H, A), lambda phi, a: np.where(phi == 1, a, -a))


# ---------------------------------------------------------------------------
# energy density and current


def energy_density(H: SpinHamiltonian) -> TranslationInvariantOperator:
    """The density ``h`` itself as an operator (identity terms excluded)."""
    return TranslationInvariantOperator.from_terms([(w, c) for w, c in H.local_terms])


def _local_products(H: SpinHamiltonian, left: int, right: int):
    """``i [h_left, h_right]`` as a dict of raw (absolute position) masks -> amplitude."""
    out: dict[tuple[int, int], complex] = {}
    for w1, c1 in H.local_terms:
        for w2, c2 in H.local_terms:
            ax, az = w1.x << left, w1.z << left
            bx, bz = w2.x << right, w2.z << right
            if ((ax & bz).bit_count() + (az & bx).bit_count()) % 2 == 0:
                continue
            cx, cz = ax ^ bx, az ^ bz
            phi = ((ax & az).bit_count() + (bx & bz).bit_count() - (cx & cz).bit_count()
                   + 2 * (az & bx).bit_count()) % 4
            key = (cx, cz)
            out[key] = out.get(key, 0) + 1j * 2 * c1 * c2 * _PHASES[phi]
    return out


def _local_current(H: SpinHamiltonian, x: int) -> dict:
    """``j_x = sum_{y < x <= y'} i [h_y, h_y']`` with absolute positions (all >= 0)."""
    r = H.range
    out: dict = {}
    for y in range(x - r + 1, x):
        for y2 in range(x, y + r):
            for k, v in _local_products(H, y, y2).items():
                out[k] = out.get(k, 0) + v
    return out


def continuity_residual(H: SpinHamiltonian) -> float:
    """Max amplitude of ``i[H, h_x] - (j_x - j_{x+1})`` for a site ``x`` away from the origin."""
    r = H.range
    x = 2 * r
    lhs: dict = {}
    for y in range(x - r + 1, x + r):
        if y == x:
            continue
        for k, v in _local_products(H, y, x).items():
            lhs[k] = lhs.get(k, 0) + v
    rhs = _local_current(H, x)
    for k, v in _local_current(H, x + 1).items():
        rhs[k] = rhs.get(k, 0) - v
    keys = set(lhs) | set(rhs)
    return max((abs(lhs.get(k, 0) - rhs.get(k, 0)) for k in keys), default=0.0)


def energy_current(H: SpinHamiltonian, tol: float = 1e-12) -> TranslationInvariantOperator:
    """Energy-current density ``j`` obeying ``i[H, h_x] = j_x - j_{x+1}``.

    ``j_x = sum_{y < x <= y'} i[h_y, h_y']`` collects the bonds that cross the
    cut left of site ``x``.  The telescoping identity is checked before
    returning.  Amplitudes are real because ``j`` is Hermitian.
    """
    res = continuity_residual(H)
    if res > tol:
        raise ContinuityError(f"telescoping residual {res:.3e} exceeds {tol:.1e}")
    loc = _local_current(H, H.range)
    items = [(k, v) for k, v in loc.items() if abs(v) > 0]
    if not items:
        return TranslationInvariantOperator(amp=np.zeros(0))
    x = np.asarray([k[0] for k, _ in items], dtype=_U)
    z = np.asarray([k[1] for k, _ in items], dtype=_U)
    a = np.asarray([v for _, v in items], dtype=complex)
    if np.max(np.abs(a.imag)) > tol * max(1.0, np.max(np.abs(a))):
        raise ContinuityError("energy current is not Hermitian")
    return TranslationInvariantOperator(x, z, a.real)
