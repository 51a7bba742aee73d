"""Lanczos recursion on translation-invariant operator densities, plus a dense ED oracle.

The driver works with real amplitudes: writing ``O_n = i^n R_n`` with
Hermitian ``R_n`` the recursion ``L O_n = b_{n+1} O_{n+1} + b_n O_{n-1}``
becomes ``b_{n+1} R_{n+1} = -i[H, R_n] + b_n R_{n-1}``, and ``-i[H, .]``
maps real Pauli amplitudes to real amplitudes.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import asdict, dataclass, field
from functools import reduce

import numpy as np
import scipy.sparse as sp

from .pauli import (SpinHamiltonian, TranslationInvariantOperator, energy_current, energy_density,
                    inner_product, liouvillian_real, MAX_SUPPORT)
from .sequences import tabulated, save_table

__all__ = [
    "BREAKDOWN_TOL",
    "DEFAULT_MEMORY_BUDGET",
    "available_memory",
    "effective_budget",
    "LanczosRun",
    "lanczos_run",
    "ising_current_run",
    "EDResult",
    "ed_oracle_coeffs",
    "ed_validity_window",
]

log = logging.getLogger(__name__)

BREAKDOWN_TOL = 1e-13
DEFAULT_MEMORY_BUDGET = 16 * 2**30
# bytes per stored term (two uint64 masks and a float64 amplitude)
_TERM_BYTES = 24
# rough peak cost per generated product term during a commutator (masks,
# phases, anchoring temporaries and the merge sort)
_PRODUCT_BYTES = 80


@dataclass
class LanczosRun:
    """Coefficients ``b_1..b_N`` with per-step diagnostics.

    ``status`` is ``complete``, ``breakdown``, ``memory-budget`` or
    ``support-limit``; in the last three cases ``b`` holds the completed steps.
    ``orthogonality`` is the largest ``|<O_m, O_n>|`` over ``|m - n| <= 2``
    and ``diagonal`` the largest ``|<O_n, L O_n>|``.
    """

    b: np.ndarray
    support_growth: list[int]
    term_counts: list[int]
    prune_threshold: float = 0.0
    status: str = "complete"
    approximate: bool = False
    orthogonality: float = 0.0
    diagonal: float = 0.0
    seconds: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return int(self.b.size)

    def to_sequence(self):
        return tabulated(self.b, **self.provenance())

    def provenance(self) -> dict:
        d = asdict(self)
        d.pop("b")
        d.pop("seconds")
        return d

    def save(self, path):
        return save_table(path, self.b, **self.provenance())


def available_memory() -> int:
    """Physical memory, capped by a cgroup limit when one is set."""
    total = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    try:
        with open("/sys/fs/cgroup/memory.max") as fh:
            raw = fh.read().strip()
        if raw.isdigit():
            total = min(total, int(raw))
    except OSError:
        pass
    return int(total)


def effective_budget(memory_budget: int | None = None) -> int:
    """Requested budget (default 16 GiB), never above 80% of the memory actually present."""
    req = DEFAULT_MEMORY_BUDGET if memory_budget is None else int(memory_budget)
    return min(req, int(0.8 * available_memory()))


def _estimate_next_bytes(H: SpinHamiltonian, op: TranslationInvariantOperator, prev_len: int) -> int:
    lmax = op.max_support
    products = len(op) * sum(lmax + w.length - 1 for w, _ in H.local_terms) // 2
    products = min(products, 8_000_000 + len(op) * 4)  # collection merges in chunks
    stored = (prev_len + 2 * len(op) + len(op) * 3) * _TERM_BYTES
    return stored + products * _PRODUCT_BYTES


def lanczos_run(H: SpinHamiltonian, O0: TranslationInvariantOperator, N: int, prune_threshold: float = 0.0,
                memory_budget: int | None = None, breakdown_tol: float = BREAKDOWN_TOL,
                check: bool = True) -> LanczosRun:
    """Run ``N`` Lanczos steps on the infinite chain starting from ``O0``.

    ``O0`` must have real amplitudes (Hermitian) and unit norm.  With
    ``prune_threshold > 0`` amplitudes below ``threshold * norm`` are dropped
    after each step and the run is marked approximate.  Before each step the
    peak memory is estimated; if it exceeds :func:`effective_budget` the run
    stops with status ``memory-budget``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if np.iscomplexobj(O0.amp):
        if np.max(np.abs(O0.amp.imag), initial=0) > 0:
            raise ValueError("O0 must have real amplitudes (a Hermitian density)")
        O0 = TranslationInvariantOperator(O0.x, O0.z, O0.amp.real, canonical=True)
    if abs(inner_product(O0, O0) - 1.0) > 1e-12:
        raise ValueError("O0 must be normalized to 1 within 1e-12")
    budget = effective_budget(memory_budget)
    prev = TranslationInvariantOperator(amp=np.zeros(0))
    cur = O0
    b_prev = 0.0
    bs: list[float] = []
    support, counts, secs = [cur.max_support], [len(cur)], []
    ortho = diag = 0.0
    status = "complete"
    for n in range(N):
        if cur.max_support + H.range > MAX_SUPPORT:
            status = "support-limit"
            break
        need = _estimate_next_bytes(H, cur, len(prev))
        if need > budget:
            log.warning("step %d needs ~%.2f GB, budget %.2f GB", n + 1, need / 2**30, budget / 2**30)
            status = "memory-budget"
            break
        t0 = time.perf_counter()
        Lc = liouvillian_real(H, cur)
        if check:
            diag = max(diag, abs(inner_product(cur, Lc)))
        nxt = Lc + prev.scaled(b_prev) if b_prev else Lc
        b = nxt.norm()
        if b < breakdown_tol:
            status = "breakdown"
            break
        nxt = nxt.scaled(1.0 / b)
        if prune_threshold > 0:
            nxt = nxt.prune(prune_threshold)
            nxt = nxt.normalized()
        if check:
            ortho = max(ortho, abs(inner_product(nxt, cur)), abs(inner_product(nxt, prev)))
        bs.append(b)
        prev, cur, b_prev = cur, nxt, b
        support.append(cur.max_support)
        counts.append(len(cur))
        secs.append(time.perf_counter() - t0)
        log.info("step %d: b=%.12g terms=%d support=%d (%.2fs)", n + 1, b, len(cur), cur.max_support, secs[-1])
    return LanczosRun(np.asarray(bs), support, counts, float(prune_threshold), status,
                      prune_threshold > 0, ortho, diag, secs,
                      {"hamiltonian": H.name, "params": dict(H.params), "steps_requested": N,
                       "memory_budget": budget})


def ising_current_run(N: int, g_z: float = -1.05, g_x: float = 0.5, **kw) -> tuple[LanczosRun, float]:
    """Lanczos run for the mixed-field Ising chain from the normalized energy current.

    Returns the run and the norm ratio ``<j, j> / <h, h>`` used for the
    diffusion constant.
    """
    from .pauli import mixed_field_ising

    H = mixed_field_ising(g_z, g_x)
    J = energy_current(H)
    h = energy_density(H)
    ratio = inner_product(J, J) / inner_product(h, h)
    run = lanczos_run(H, J.normalized(), N, **kw)
    run.metadata["norm_ratio"] = float(ratio)
    run.metadata["operator"] = "energy-current"
    return run, float(ratio)


# ---------------------------------------------------------------------------
# dense oracle

_PAULI = {
    "I": sp.identity(2, format="csr", dtype=complex),
    "X": sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex)),
    "Y": sp.csr_matrix(np.array([[0, -1j], [1j, 0]], dtype=complex)),
    "Z": sp.csr_matrix(np.array([[1, 0], [0, -1]], dtype=complex)),
}


def _string_matrix(letters: str, at: int, L: int):
    """Sparse matrix of a Pauli string placed at site ``at`` on a ring of ``L`` sites."""
    site = ["I"] * L
    for j, ch in enumerate(letters):
        if ch != "I":
            site[(at + j) % L] = ch
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), (_PAULI[c] for c in site))


def _ring_operator(terms, L: int):
    out = sp.csr_matrix((2**L, 2**L), dtype=complex)
    for word, c in terms:
        if word.length > L:
            raise ValueError(f"term {word} does not fit on {L} sites")
        for x in range(L):
            out = out + c * _string_matrix(word.letters, x, L)
    return out


@dataclass
class EDResult:
    """Oracle coefficients with the window over which they match the infinite chain."""

    b: np.ndarray
    L: int
    valid_until: int

    @property
    def valid(self) -> np.ndarray:
        return self.b[: self.valid_until]


def ed_validity_window(H: SpinHamiltonian, O0: TranslationInvariantOperator, L: int) -> int:
    """Largest ``n`` for which ``b_n`` on an ``L``-site ring equals the infinite-chain value.

    ``b_n`` is the norm of ``L O_{n-1}``, whose words span up to
    ``s_0 + n (r - 1)`` sites; the ring reproduces the chain while that is
    below ``L``.
    """
    s0, r = O0.max_support, H.range
    if r <= 1:
        return 2 * L
    return max(0, (L - 1 - s0) // (r - 1))


def ed_oracle_coeffs(H: SpinHamiltonian, O0: TranslationInvariantOperator, L: int, N: int,
                     memory_budget: int | None = None) -> EDResult:
    """Lanczos coefficients from dense ``2^L x 2^L`` operators on a periodic ring.

    Uses the normalized trace inner product ``Tr(A^dag B) / 2^L``.  Values
    past :func:`ed_validity_window` are returned but flagged by
    ``valid_until``.
    """
    if L > 14:
        raise ValueError("L must be <= 14")
    if N > 2 * L:
        raise ValueError("N must be <= 2L")
    dim = 2**L
    if 5 * dim * dim * 16 > effective_budget(memory_budget):
        raise MemoryError(f"dense oracle on {L} sites exceeds the memory budget")
    Hm = _ring_operator(H.local_terms, L)
    O = _ring_operator(list(O0.terms.items()), L).toarray()

    def ip(A, B):
        return np.vdot(A, B) / dim

    O /= np.sqrt(ip(O, O).real)
    prev = np.zeros_like(O)
    b_prev = 0.0
    bs = []
    for _ in range(N):
        A = Hm @ O
        A -= (Hm.T @ O.T).T  # O H with H symmetric
        if b_prev:
            A -= b_prev * prev
        b = float(np.sqrt(ip(A, A).real))
        if b < BREAKDOWN_TOL:
            break
        A /= b
        bs.append(b)
        prev, O, b_prev = O, A, b
    return EDResult(np.asarray(bs), L, min(len(bs), ed_validity_window(H, O0, L)))
