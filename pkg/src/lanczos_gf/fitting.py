"""Series containers, scaling fits and convergence classification helpers."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "ExperimentSeries",
    "ScalingFit",
    "FitError",
    "rate_fit",
    "fit_log_power",
    "fit_log_linear",
    "fit_loglog",
    "fit_plateau",
    "TailClass",
    "classify_increments",
    "dyadic_increments",
]


class FitError(ValueError):
    """Raised when a fit precondition is not met."""


@dataclass
class ExperimentSeries:
    """``(N, value, error)`` triples plus attached fits and metadata."""

    name: str
    N: np.ndarray
    value: np.ndarray
    error: np.ndarray | None = None
    fits: dict[str, "ScalingFit"] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.N = np.asarray(self.N)
        self.value = np.asarray(self.value)
        if self.error is not None:
            self.error = np.asarray(self.error, dtype=float)
            if self.error.shape != self.N.shape:
                raise ValueError("error and N must have the same shape")
        if self.value.shape[0] != self.N.shape[0]:
            raise ValueError("value and N must have the same length")

    def columns(self) -> dict[str, np.ndarray]:
        cols: dict[str, np.ndarray] = {"N": self.N}
        v = self.value
        if np.iscomplexobj(v):
            cols["re"] = v.real
            cols["im"] = v.imag
            cols["abs"] = np.abs(v)
        else:
            cols["value"] = v
        if self.error is not None:
            cols["error"] = self.error
        return cols

    def to_csv(self, path=None) -> str:
        """Write the series as CSV (``repr`` floats, so the bytes are reproducible)."""
        cols = self.columns()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(cols))
        for i in range(self.N.shape[0]):
            w.writerow([_fmt(cols[k][i]) for k in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _fmt(x):
    if isinstance(x, (np.integer, int)):
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class ScalingFit:
    """Result of a scaling fit.

    ``model`` is one of ``PowerLaw``, ``LogPower``, ``LogLog``, ``Plateau``.
    For ``PowerLaw`` the fit is ``y = prefactor * N**exponent``; for
    ``LogPower`` it is ``y = prefactor * (log N)**exponent + offset``; for
    ``LogLog`` ``y = prefactor * log(log N) + offset``; for ``Plateau`` the
    exponent is 0 and ``prefactor`` is the mean.
    """

    model: str
    exponent: float
    prefactor: float
    r2: float
    n_range: tuple[float, float]
    offset: float = 0.0
    flags: tuple[str, ...] = ()

    def predict(self, n):
        n = np.asarray(n, dtype=float)
        if self.model == "PowerLaw":
            return self.prefactor * n ** self.exponent
        if self.model == "LogPower":
            return self.prefactor * np.log(n) ** self.exponent + self.offset
        if self.model == "LogLog":
            return self.prefactor * np.log(np.log(n)) + self.offset
        return np.full_like(n, self.prefactor)

    def as_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "offset": self.offset,
            "r2": self.r2,
            "n_range": list(self.n_range),
            "flags": list(self.flags),
        }


def _r2(y, yhat) -> float:
    ss = float(np.sum((y - np.mean(y)) ** 2))
    if ss == 0:
        return 1.0 if np.allclose(y, yhat) else 0.0
    return float(max(0.0, min(1.0, 1.0 - np.sum((y - yhat) ** 2) / ss)))


def _window(n, y, window):
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is not None:
        lo, hi = window
        m = (n >= lo) & (n <= hi)
        n, y = n[m], y[m]
    return n, y


def rate_fit(series: ExperimentSeries | tuple, family: str = "PowerLaw", window=None,
             min_points: int = 6, min_decades: float = 1.5) -> ScalingFit:
    """Fit a convergence rate.

    ``PowerLaw`` regresses ``log|y|`` on ``log N``; ``LogPower`` fits
    ``A (log N)^p + C``.  For a series the fitted quantity is ``error`` when
    present, otherwise ``|value|``.
    """
    if isinstance(series, ExperimentSeries):
        n = series.N
        y = series.error if series.error is not None else np.abs(series.value)
    else:
        n, y = series
    n, y = _window(n, y, window)
    if n.size < min_points:
        raise FitError(f"need at least {min_points} points, got {n.size}")
    if n.min() <= 0 or np.log10(n.max() / n.min()) < min_decades - 1e-9:
        raise FitError(f"points must span at least {min_decades} decades")
    if family == "LogPower":
        return fit_log_power(n, y)
    if family != "PowerLaw":
        raise FitError(f"unknown family {family!r}")
    ay = np.abs(y)
    if np.any(ay == 0):
        raise FitError("zero values cannot be fitted in log coordinates")
    x, ly = np.log(n), np.log(ay)
    slope, icpt = np.polyfit(x, ly, 1)
    flags = []
    order = np.argsort(n)
    d = np.diff(ay[order])
    if not (np.all(d <= 0) or np.all(d >= 0)):
        flags.append("non-monotone")
    return ScalingFit("PowerLaw", float(slope), float(math.exp(icpt)), _r2(ly, slope * x + icpt),
                      (float(n.min()), float(n.max())), flags=tuple(flags))


def _lin_fit(x, y):
    X = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef, X @ coef


def fit_log_power(n, y, p_bounds=(0.05, 6.0), window=None) -> ScalingFit:
    """Fit ``y = A (log n)^p + C`` by scanning ``p`` (linear least squares inside)."""
    n, y = _window(n, y, window)
    if n.size < 4:
        raise FitError("need at least 4 points")
    u = np.log(n)

    def sse(p):
        _, yhat = _lin_fit(u ** p, y)
        return float(np.sum((y - yhat) ** 2))

    # coarse scan first so the bounded search starts in the right basin
    grid = np.linspace(p_bounds[0], p_bounds[1], 60)
    vals = [sse(p) for p in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(sse, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    p = float(res.x)
    coef, yhat = _lin_fit(u ** p, y)
    flags = []
    if abs(p - p_bounds[0]) < 1e-3 or abs(p - p_bounds[1]) < 1e-3:
        flags.append("exponent-at-bound")
    return ScalingFit("LogPower", p, float(coef[0]), _r2(y, yhat), (float(n.min()), float(n.max())),
                      offset=float(coef[1]), flags=tuple(flags))


def fit_log_linear(n, y, window=None) -> ScalingFit:
    """Fit ``y = A log n + C`` (the ``p = 1`` member of ``LogPower``)."""
    n, y = _window(n, y, window)
    coef, yhat = _lin_fit(np.log(n), y)
    return ScalingFit("LogPower", 1.0, float(coef[0]), _r2(y, yhat), (float(n.min()), float(n.max())),
                      offset=float(coef[1]), flags=("exponent-fixed",))


def fit_loglog(n, y, window=None) -> ScalingFit:
    """Fit ``y = A log(log n) + C``."""
    n, y = _window(n, y, window)
    coef, yhat = _lin_fit(np.log(np.log(n)), y)
    return ScalingFit("LogLog", 0.0, float(coef[0]), _r2(y, yhat), (float(n.min()), float(n.max())),
                      offset=float(coef[1]))


def fit_plateau(n, y, window=None) -> ScalingFit:
    """Constant model; ``r2`` is replaced by 1 - relative spread (0 when spread >= mean)."""
    n, y = _window(n, y, window)
    mean = float(np.mean(y))
    spread = float(np.ptp(y))
    quality = max(0.0, 1.0 - spread / abs(mean)) if mean != 0 else 0.0
    return ScalingFit("Plateau", 0.0, mean, quality, (float(n.min()), float(n.max())),
                      flags=(f"relative-spread={spread / abs(mean) if mean else float('inf'):.3g}",))


# ---------------------------------------------------------------------------
# classification of accumulated sums


@dataclass(frozen=True)
class TailClass:
    """Classification of a sequence of block increments.

    ``kind`` is ``convergent``, ``divergent`` or ``marginal``.  ``q`` is the
    fitted exponent in ``|I_j| ~ j^(-q)`` over the last blocks (geometric decay
    shows up as a large ``q``), ``growth`` the ratio of the last two
    increments.
    """

    kind: str
    q: float
    growth: float
    blocks: int


def dyadic_increments(checkpoints: np.ndarray, cumulative: np.ndarray) -> np.ndarray:
    """Differences of a cumulative quantity between successive checkpoints."""
    return np.diff(np.asarray(cumulative, dtype=float))


def classify_increments(inc, j0: int = 1, min_blocks: int = 4, q_conv: float = 1.25,
                        q_div: float = 1.1, noise: float = 1e-12, scale: float = 1.0) -> TailClass:
    """Decide whether ``sum_j inc_j`` converges, from increments over dyadic blocks.

    Block ``j`` covers one doubling of the underlying variable.  A summand
    behaving like ``n^-1 (log n)^-q`` gives ``|inc_j| ~ j^-q``, so the sum
    converges for ``q > 1`` and diverges for ``q <= 1``; power-law summands
    give geometric increments (``q`` growing with ``j``).  Increments below
    ``noise * scale`` count as zero (converged).
    """
    inc = np.abs(np.asarray(inc, dtype=float))
    nb = inc.size
    if nb < min_blocks:
        return TailClass("marginal", float("nan"), float("nan"), nb)
    tail = inc[nb // 2:]
    jj = np.arange(j0, j0 + nb)[nb // 2:].astype(float)
    floor = noise * max(scale, 1e-300)
    if np.all(tail <= floor):
        return TailClass("convergent", float("inf"), 0.0, nb)
    if np.all(tail[-2:] <= floor):
        # decayed into rounding noise before the end of the range
        return TailClass("convergent", float("inf"), 0.0, nb)
    growth = float(tail[-1] / tail[-2]) if tail[-2] > 0 else float("inf")
    pos = tail > 0
    if pos.sum() < 3:
        return TailClass("convergent", float("inf"), growth, nb)
    # local log-log slope of the last few increments against the block index
    q = float(-np.polyfit(np.log(jj[pos][-4:]), np.log(tail[pos][-4:]), 1)[0])
    if growth >= 1.0 - 1e-9 or q <= q_div:
        kind = "divergent"
    elif q > q_conv:
        kind = "convergent"
    else:
        kind = "marginal"
    return TailClass(kind, q, growth, nb)
