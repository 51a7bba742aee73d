"""Lanczos coefficient sequences.

A :class:`CoeffSequence` is a positive sequence ``b_1, b_2, ...`` given either
by a closed form or by a table.  All closed forms are vectorised over ``n`` and
can be evaluated in double or extended (``np.longdouble``) precision.

The module also provides the even/odd split ``b_n = f_n + (-1)^n s_n``
(:func:`decompose_stagger`), least-squares growth fits (:func:`fit_growth`) and
a plain-text table format for storing coefficients.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

__all__ = [
    "SequenceKind",
    "CoeffSequence",
    "SequenceError",
    "meixner_pollaczek",
    "toy_irrelevant",
    "toy_relevant",
    "freud_like",
    "ogh_one_d",
    "ogh_linear",
    "tabulated",
    "custom",
    "builtin_sequence",
    "BUILTIN_SEQUENCES",
    "eval_sequence",
    "StaggerDecomposition",
    "decompose_stagger",
    "GrowthModel",
    "GrowthFit",
    "fit_growth",
    "save_table",
    "load_table",
]


class SequenceError(ValueError):
    """Raised for invalid sequence definitions or out-of-range indices."""


class SequenceKind(str, Enum):
    MEIXNER_POLLACZEK = "MeixnerPollaczek"
    TOY_IRRELEVANT = "ToyIrrelevant"
    TOY_RELEVANT = "ToyRelevant"
    FREUD_LIKE = "FreudLike"
    OGH_ONE_D = "OghOneD"
    OGH_LINEAR = "OghLinear"
    TABULATED = "Tabulated"
    CUSTOM = "Custom"


# names usable inside Custom expressions
_EXPR_FUNCS = {
    "log": np.log,
    "log1p": np.log1p,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "arctan": np.arctan,
}
_EXPR_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub,
    ast.UAdd, ast.Mod, ast.FloorDiv,
)


def _compile_expression(expr: str):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise SequenceError(f"cannot parse expression {expr!r}: {exc}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise SequenceError(f"disallowed syntax in expression: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in _EXPR_FUNCS and node.id not in _EXPR_CONSTS and node.id != "n":
            raise SequenceError(f"unknown name {node.id!r} in expression")
    return compile(tree, "<sequence>", "eval")


@dataclass(frozen=True)
class CoeffSequence:
    """A positive Lanczos coefficient sequence ``b_n`` for ``n >= 1``.

    Use the factory functions (:func:`meixner_pollaczek`, :func:`tabulated`,
    ...) rather than the constructor.  ``b_0 = 1`` by convention and is never
    evaluated by the closed forms.

    Attributes:
        kind: which family the sequence belongs to.
        params: family parameters (read-only mapping).
        n_max: largest valid index, or ``None`` for unbounded closed forms.
    """

    kind: SequenceKind
    params: Mapping[str, Any] = field(default_factory=dict)
    n_max: int | None = None
    _table: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind is SequenceKind.CUSTOM:
            object.__setattr__(self, "_code", _compile_expression(self.params["expr"]))

    @property
    def label(self) -> str:
        if not self.params or self.kind is SequenceKind.TABULATED:
            return self.kind.value
        inner = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.kind.value}({inner})"

    def values(self, n, dtype=np.float64) -> np.ndarray:
        """Evaluate ``b_n`` for an array of indices ``n >= 1``."""
        n_arr = np.asarray(n)
        if n_arr.size and (np.min(n_arr) < 1):
            raise SequenceError("sequence index must be >= 1")
        if self.n_max is not None and n_arr.size and np.max(n_arr) > self.n_max:
            raise SequenceError(f"index {int(np.max(n_arr))} beyond tabulated range {self.n_max}")
        if self.kind is SequenceKind.TABULATED:
            return self._table[n_arr - 1].astype(dtype)
        x = n_arr.astype(dtype)
        out = self._closed_form(x, n_arr)
        out = np.asarray(out, dtype=dtype)
        if self.kind is SequenceKind.CUSTOM and out.size:
            ok = (out > 0) & np.isfinite(out)
            if not np.all(ok):
                bad = n_arr.ravel()[np.argmax(~ok.ravel())]
                raise SequenceError(f"custom expression is not positive and finite at n={int(bad)}")
        return out

    def __call__(self, n: int) -> float:
        return float(self.values(np.array([n]))[0])

    def array(self, n_max: int, dtype=np.float64) -> np.ndarray:
        """Return ``[b_0, b_1, ..., b_{n_max}]`` with ``b_0 = 1``."""
        out = np.empty(n_max + 1, dtype=dtype)
        out[0] = 1
        if n_max >= 1:
            out[1:] = self.values(np.arange(1, n_max + 1), dtype=dtype)
        return out

    def _closed_form(self, x: np.ndarray, n_int: np.ndarray):
        p = self.params
        sign = np.where(n_int % 2 == 0, 1, -1).astype(x.dtype)
        k = self.kind
        if k is SequenceKind.MEIXNER_POLLACZEK:
            return p["alpha"] * np.sqrt(x * (x - 1 + p["eta"]))
        if k is SequenceKind.TOY_IRRELEVANT:
            return x * x / np.sqrt(x * x - x.dtype.type(0.25))
        if k is SequenceKind.TOY_RELEVANT:
            return x + 1 + sign * x ** (-x.dtype.type(2) / 3) / 2
        if k is SequenceKind.FREUD_LIKE:
            # log(n) vanishes at n=1, so the staggered term starts at n=2
            logn = np.log(np.maximum(x, 2))
            stag = np.where(n_int >= 2, sign / (2 * logn) ** 2, 0)
            return x / 2 + stag
        if k in (SequenceKind.OGH_ONE_D, SequenceKind.OGH_LINEAR):
            lg = np.log1p(x)
            lead = x / lg if k is SequenceKind.OGH_ONE_D else x
            return p["alpha"] * lead + p["gamma"] + sign * p["s"] * lg ** (-p["a"])
        if k is SequenceKind.CUSTOM:
            env = dict(_EXPR_FUNCS)
            env.update(_EXPR_CONSTS)
            env["n"] = x.astype(np.longdouble)
            # non-finite results are rejected by the caller, so no warnings here
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                val = eval(self._code, {"__builtins__": {}}, env)  # noqa: S307 - AST is whitelisted
            return np.broadcast_to(np.asarray(val, dtype=np.longdouble), x.shape)
        raise SequenceError(f"unsupported kind {k}")


def meixner_pollaczek(alpha: float = 1.0, eta: float = 1.0) -> CoeffSequence:
    """Symmetric Meixner-Pollaczek coefficients ``alpha*sqrt(n(n-1+eta))``."""
    if not (alpha > 0 and eta > 0):
        raise SequenceError("Meixner-Pollaczek needs alpha > 0 and eta > 0")
    return CoeffSequence(SequenceKind.MEIXNER_POLLACZEK, {"alpha": float(alpha), "eta": float(eta)})


def toy_irrelevant() -> CoeffSequence:
    """``n^2/sqrt(n^2 - 1/4)``: linear growth with an unstaggered 1/(8n) correction."""
    return CoeffSequence(SequenceKind.TOY_IRRELEVANT)


def toy_relevant() -> CoeffSequence:
    """``n + 1 + (-1)^n n^(-2/3)/2``: slowly decaying staggering."""
    return CoeffSequence(SequenceKind.TOY_RELEVANT)


def freud_like() -> CoeffSequence:
    """``n/2 + (-1)^n/(2 log n)^2``, the asymptotic form for the weight exp(-pi|x|)."""
    return CoeffSequence(SequenceKind.FREUD_LIKE)


def ogh_one_d(alpha: float = 1.0, gamma: float = 0.0, s: float = 0.0, a: float = 1.0) -> CoeffSequence:
    """``alpha*n/log(n+1) + gamma + s*(-1)^n*log(n+1)^(-a)`` (one-dimensional growth)."""
    return _ogh(SequenceKind.OGH_ONE_D, alpha, gamma, s, a)


def ogh_linear(alpha: float = 1.0, gamma: float = 0.0, s: float = 0.0, a: float = 1.0) -> CoeffSequence:
    """``alpha*n + gamma + s*(-1)^n*log(n+1)^(-a)`` (linear growth, log staggering)."""
    return _ogh(SequenceKind.OGH_LINEAR, alpha, gamma, s, a)


def _ogh(kind, alpha, gamma, s, a):
    if alpha <= 0:
        raise SequenceError("alpha must be positive")
    seq = CoeffSequence(kind, {"alpha": float(alpha), "gamma": float(gamma), "s": float(s), "a": float(a)})
    # the first few terms are the only place positivity can fail
    head = seq.values(np.arange(1, 65))
    if not np.all(head > 0):
        raise SequenceError(f"{seq.label} is not positive for small n")
    return seq


def tabulated(values: Sequence[float] | np.ndarray, **meta) -> CoeffSequence:
    """Sequence backed by stored values ``b_1..b_N`` (immutable copy)."""
    arr = np.array(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise SequenceError("empty coefficient table")
    if not np.all(np.isfinite(arr)) or not np.all(arr > 0):
        raise SequenceError("tabulated coefficients must be finite and positive")
    arr.setflags(write=False)
    return CoeffSequence(SequenceKind.TABULATED, dict(meta), n_max=int(arr.size), _table=arr)


def custom(expr: str) -> CoeffSequence:
    """Sequence from an arithmetic expression in ``n`` (numpy functions allowed)."""
    seq = CoeffSequence(SequenceKind.CUSTOM, {"expr": expr})
    seq.values(np.arange(1, 65))
    return seq


# named cases used by the experiments; the d>1 / d=1 labels refer to the growth
# class (linear vs n/log n)
BUILTIN_SEQUENCES = {
    "toy-irrelevant": toy_irrelevant,
    "toy-relevant": toy_relevant,
    "freud": freud_like,
    "d1-case1": lambda: ogh_one_d(1.0, 1.0, 0.1, 3.0),
    "d1-case2": lambda: ogh_one_d(1.0, 0.0, 1.0 / 12.0, 5.0),
    "dgt1-case1": lambda: ogh_linear(1.0, 1.0, 0.25, 2.0),
    "dgt1-case2": lambda: ogh_linear(1.0, 1.0, 0.1, 1.5),
}


def builtin_sequence(spec: str) -> CoeffSequence:
    """Parse a sequence spec string.

    Accepted forms: a builtin name (``toy-irrelevant``, ``d1-case1``, ...),
    ``mp:ALPHA,ETA``, ``ogh1d:ALPHA,GAMMA,S,A``, ``ogh:ALPHA,GAMMA,S,A`` and
    ``expr:<expression in n>``.
    """
    spec = spec.strip()
    if spec in BUILTIN_SEQUENCES:
        return BUILTIN_SEQUENCES[spec]()
    head, _, rest = spec.partition(":")
    try:
        if head == "mp":
            nums = [float(v) for v in rest.split(",")] if rest else []
            return meixner_pollaczek(*nums)
        if head in ("ogh1d", "ogh"):
            nums = [float(v) for v in rest.split(",")]
            return (ogh_one_d if head == "ogh1d" else ogh_linear)(*nums)
    except (TypeError, ValueError) as exc:
        raise SequenceError(f"bad parameters in {spec!r}: {exc}") from None
    if head == "expr":
        return custom(rest)
    raise SequenceError(f"unknown sequence spec {spec!r}")


def eval_sequence(seq: CoeffSequence, n: int) -> float:
    """Return ``b_n`` for a single index."""
    if n < 1:
        raise SequenceError("sequence index must be >= 1")
    return seq(int(n))


# ---------------------------------------------------------------------------
# staggering split


@dataclass(frozen=True)
class StaggerDecomposition:
    """``b_n = f_n + (-1)^n s_n`` on the interior index range ``n``.

    Attributes:
        n: indices where the split is defined.
        f: smooth part estimate.
        s: staggering amplitude.
        window: smoothing half-width.
        residual: max reconstruction error.
        positivity_flag: True when ``|s_n/f_n|`` does not decay over the range,
            i.e. the split does not look like a small correction.
    """

    n: np.ndarray
    f: np.ndarray
    s: np.ndarray
    window: int
    residual: float
    positivity_flag: bool


def _binomial_kernel(window: int) -> np.ndarray:
    row = np.array([math.comb(2 * window, j) for j in range(2 * window + 1)], dtype=float)
    return row / row.sum()


def decompose_stagger(b: Sequence[float] | np.ndarray, window: int = 1, n0: int = 1) -> StaggerDecomposition:
    """Split coefficients into smooth and staggered parts.

    The smooth part is a binomial moving average of half-width ``window``
    (``(b_{n-1} + 2 b_n + b_{n+1})/4`` for ``window=1``).  Any binomial kernel
    annihilates ``(-1)^n`` exactly and preserves linear trends.

    Args:
        b: coefficient values, ``b[0]`` being ``b_{n0}``.
        window: smoothing half-width, at least 1.
        n0: index of the first value.
    """
    b = np.asarray(b, dtype=float)
    if window < 1:
        raise SequenceError("window must be >= 1")
    if b.size < 2 * window + 3:
        raise SequenceError(f"need at least {2 * window + 3} values, got {b.size}")
    kern = _binomial_kernel(window)
    f = np.convolve(b, kern, mode="valid")
    n = np.arange(n0 + window, n0 + b.size - window)
    core = b[window: b.size - window]
    sign = np.where(n % 2 == 0, 1.0, -1.0)
    s = sign * (core - f)
    recon = f + sign * s
    residual = float(np.max(np.abs(recon - core)))
    ratio = np.abs(s / f)
    q = max(ratio.size // 4, 1)
    flag = bool(np.mean(ratio[-q:]) >= np.mean(ratio[:q]) and np.mean(ratio[-q:]) > 1e-3) or bool(np.any(ratio > 0.5))
    return StaggerDecomposition(n=n, f=f, s=s, window=window, residual=residual, positivity_flag=flag)


# ---------------------------------------------------------------------------
# growth fits


class GrowthModel(str, Enum):
    LINEAR = "Linear"
    N_OVER_LOG = "NOverLog"


@dataclass(frozen=True)
class GrowthFit:
    """Least-squares growth parameters.

    For ``Linear`` the model is ``alpha*n + gamma + delta/n`` and
    ``eta_matched = 1 + 2*gamma/alpha`` is the Meixner-Pollaczek parameter with
    the same constant term.  For ``NOverLog`` the model is
    ``alpha*n/log(n+1) + gamma`` and ``eta_matched`` is NaN.
    """

    model: GrowthModel
    alpha: float
    gamma: float
    eta_matched: float
    fit_window: tuple[int, int]
    residual: float
    delta: float = 0.0


def fit_growth(b, model: GrowthModel | str = GrowthModel.LINEAR, fit_window: tuple[int, int] | None = None,
               n0: int = 1, destagger: bool = True) -> GrowthFit:
    """Fit the smooth part of ``b`` to a growth model.

    Args:
        b: coefficients, ``b[0]`` being ``b_{n0}``; may also be a CoeffSequence.
        model: ``Linear`` or ``NOverLog``.
        fit_window: inclusive index range ``(lo, hi)``.
        destagger: remove ``(-1)^n`` staggering with the (1,2,1)/4 kernel first.
    """
    model = GrowthModel(model)
    if isinstance(b, CoeffSequence):
        if fit_window is None:
            raise SequenceError("fit_window is required for closed-form sequences")
        lo, hi = fit_window
        lo_eval = max(lo - 1, 1)
        vals = b.values(np.arange(lo_eval, hi + 2))
        b, n0 = vals, lo_eval
    b = np.asarray(b, dtype=float)
    n_all = np.arange(n0, n0 + b.size)
    if fit_window is None:
        fit_window = (int(n_all[0]), int(n_all[-1]))
    lo, hi = fit_window
    if destagger and b.size >= 5:
        dec = decompose_stagger(b, 1, n0)
        n_s, f_s = dec.n, dec.f
    else:
        n_s, f_s = n_all, b
    mask = (n_s >= lo) & (n_s <= hi)
    n, y = n_s[mask].astype(float), f_s[mask]
    if n.size < 4:
        raise SequenceError("fit window must contain at least 4 usable points")
    if model is GrowthModel.LINEAR:
        cols = [n, np.ones_like(n), 1.0 / n]
    else:
        cols = [n / np.log1p(n), np.ones_like(n)]
    X = np.vstack(cols).T
    if np.linalg.matrix_rank(X) < X.shape[1] or np.var(y) == 0 and np.ptp(n) == 0:
        raise SequenceError("degenerate fit (zero variance)")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    alpha, gamma = float(coef[0]), float(coef[1])
    if alpha <= 0:
        raise SequenceError(f"fitted alpha={alpha:g} is not positive")
    residual = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    if model is GrowthModel.LINEAR:
        return GrowthFit(model, alpha, gamma, 1.0 + 2.0 * gamma / alpha, (lo, hi), residual, float(coef[2]))
    return GrowthFit(model, alpha, gamma, float("nan"), (lo, hi), residual)


# ---------------------------------------------------------------------------
# table format

_TABLE_MAGIC = "# lanczos-coefficients v1"


def save_table(path: str | Path, values, **meta) -> Path:
    """Write coefficients ``b_1..b_N`` with a metadata header.

    The header is a block of ``# key: <json>`` lines terminated by ``# ---``;
    each following line holds one coefficient as a round-trip decimal.
    """
    path = Path(path)
    arr = np.asarray(values, dtype=float)
    lines = [_TABLE_MAGIC]
    meta = {"kind": "Tabulated", "precision": "double", "count": int(arr.size), **meta}
    for key in sorted(meta):
        lines.append(f"# {key}: {json.dumps(meta[key], sort_keys=True, default=_json_default)}")
    lines.append("# ---")
    lines.extend(repr(float(v)) for v in arr)
    path.write_text("\n".join(lines) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"not serialisable: {type(obj)}")


def load_table(path: str | Path) -> tuple[CoeffSequence, dict]:
    """Read a coefficient table; returns the sequence and its metadata."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != _TABLE_MAGIC:
        raise SequenceError(f"{path}: not a coefficient table")
    meta: dict[str, Any] = {}
    i = 1
    while i < len(text) and text[i].startswith("#"):
        line = text[i][1:].strip()
        i += 1
        if line == "---":
            break
        key, _, val = line.partition(":")
        try:
            meta[key.strip()] = json.loads(val)
        except json.JSONDecodeError:
            raise SequenceError(f"{path}: bad header line {line!r}") from None
    try:
        vals = [float(v) for v in text[i:] if v.strip()]
    except ValueError as exc:
        raise SequenceError(f"{path}: bad coefficient line ({exc})") from None
    if "count" in meta and meta["count"] != len(vals):
        raise SequenceError(f"{path}: header count {meta['count']} != {len(vals)} values")
    provenance = {k: v for k, v in meta.items() if k not in ("kind", "count")}
    return tabulated(vals, **{k: v for k, v in provenance.items() if k == "source"}), meta
