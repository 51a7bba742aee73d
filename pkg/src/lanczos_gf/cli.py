"""Command-line interface: ``lanczos-gf <subcommand> ...``.

Exit codes: 0 success, 2 validation error, 3 resource limit, 4 numerical
non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cfrac import NonConvergence, SingularLevel, truncated_green
from .experiments import EXPERIMENTS, CoeffCache, ExperimentError, ExperimentSpec, ising_coefficients, run_experiment
from .fitting import FitError
from .lanczos import DEFAULT_MEMORY_BUDGET
from .products import CONJECTURAL_NOTE, diffusion_estimate
from .sequences import SequenceError, builtin_sequence, decompose_stagger, load_table, save_table
from .smoothness import (derivative_scaling, estimate_stagger_exponent, log_grid, smoothness_criterion,
                         table_order)
from .stitching import (HorizonError, StitchPlan, error_bound_finite_im, error_bound_zero_freq,
                        stitched_green, terminator_sequence, zero_freq_stitched)

EXIT_OK, EXIT_VALIDATION, EXIT_RESOURCE, EXIT_NUMERICAL = 0, 2, 3, 4

SEQ_HELP = ("coefficient sequence: a builtin name (" + ", ".join(
    ["toy-irrelevant", "toy-relevant", "freud", "d1-case1", "d1-case2", "dgt1-case1", "dgt1-case2"])
    + "), mp:ALPHA,ETA, ogh1d:ALPHA,GAMMA,S,A, ogh:ALPHA,GAMMA,S,A, expr:<expression in n>, "
    "or table:PATH for a stored coefficient table")

FORMATS = """\
file formats:
  coefficient tables  '# lanczos-coefficients v1' header, '# key: <json>' metadata
                      lines ending with '# ---', then one b_n per line (n = 1, 2, ...)
  CSV series          header row, then one row per point; floats are written with
                      round-trip precision
  records             one JSON object (complex values split into *_re/*_im)
units: frequencies z are in the units of the coefficients b_n; indices n, N are
dimensionless step counts."""


class ResourceLimit(RuntimeError):
    pass


def _seq(spec: str):
    if spec.startswith("table:"):
        seq, _ = load_table(spec[len("table:"):])
        return seq
    return builtin_sequence(spec)


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def _emit(args, text: str, name: str | None = None):
    """Write to ``--out`` (file, or directory + ``name``) or to stdout."""
    if args.out in (None, "-"):
        sys.stdout.write(text)
        return
    out = Path(args.out)
    if name and (out.is_dir() or args.out.endswith("/")):
        out.mkdir(parents=True, exist_ok=True)
        out = out / name
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(f"wrote {out}", file=sys.stderr)


def _record(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True, default=lambda o: o.item() if hasattr(o, "item") else str(o)) + "\n"


def _cz(prefix, v):
    v = complex(v)
    return {f"{prefix}_re": v.real, f"{prefix}_im": v.imag, f"{prefix}_abs": abs(v)}


# ---------------------------------------------------------------------------
# subcommands


def cmd_coeffs(args) -> int:
    if args.model == "ising":
        if args.op != "energy-current":
            raise ValueError("only --op energy-current is supported")
        cache = CoeffCache(args.cache) if args.cache else None
        b, meta, hit = ising_coefficients(args.steps, args.gz, args.gx, args.prune, cache,
                                          int(args.memory_gb * 2**30))
        meta = {**meta, "g_z": args.gz, "g_x": args.gx, "operator": args.op, "cache_hit": hit}
        status = meta.get("status", "complete")
    else:
        seq = _seq(args.model)
        b = seq.array(args.steps)[1:]
        meta = {"source": seq.label}
        status = "complete"
    if args.out in (None, "-"):
        sys.stdout.write("".join(f"{v!r}\n" for v in map(float, b)))
    else:
        out = Path(args.out)
        if out.is_dir() or args.out.endswith("/"):
            out.mkdir(parents=True, exist_ok=True)
            out = out / f"{args.model.replace(':', '_')}_{args.steps}.coeffs"
        save_table(out, b, **meta)
        print(f"wrote {out}", file=sys.stderr)
    if status == "memory-budget" or status == "support-limit":
        print(f"stopped after {len(b)} steps: {status}", file=sys.stderr)
        return EXIT_RESOURCE
    if status == "breakdown":
        print(f"Krylov space exhausted after {len(b)} steps", file=sys.stderr)
    return EXIT_OK


def _plan(args, seq):
    if args.method == "const":
        return StitchPlan(args.level, "Constant")
    return StitchPlan(args.level, "MP", args.alpha, args.eta)


def cmd_greens(args) -> int:
    seq = _seq(args.seq)
    z = args.z
    rec = {"seq": args.seq, "method": args.method, "N": args.level, **_cz("z", z)}
    if args.method == "trunc":
        rec.update(_cz("value", truncated_green(seq, z, args.level)))
    else:
        plan = _plan(args, seq)
        ev = stitched_green(seq, plan, z)
        rec.update(_cz("value", ev.value))
        rec.update(depth=ev.depth, tolerance=ev.tolerance)
        if args.method == "mp":
            rep = error_bound_finite_im(seq, terminator_sequence(plan), z, args.level, strict=False)
            rec.update(error_bound=rep.value, bound_certified=rep.certified)
    _emit(args, _record(rec), "greens.json")
    return EXIT_OK


def cmd_zerofreq(args) -> int:
    seq = _seq(args.seq)
    plan = _plan(args, seq)
    val = zero_freq_stitched(seq, plan)
    rec = {"seq": args.seq, "method": args.method, "N": args.level, **_cz("value", val), "note": CONJECTURAL_NOTE}
    if args.method == "mp":
        rep = error_bound_zero_freq(seq, terminator_sequence(plan), args.level, M=args.M)
        rec.update(error_bound=rep.value, M=args.M, tail_class=rep.classification)
    _emit(args, _record(rec), "zerofreq.json")
    return EXIT_OK


def cmd_diffusion(args) -> int:
    if args.table:
        seq, meta = load_table(args.table)
        b = seq.array(seq.n_max)[1:]
        ratio = args.norm_ratio if args.norm_ratio is not None else meta.get("norm_ratio", 1.0)
    else:
        cache = CoeffCache(args.cache) if args.cache else None
        b, meta, _ = ising_coefficients(args.steps, args.gz, args.gx, 0.0, cache)
        ratio = args.norm_ratio if args.norm_ratio is not None else meta["norm_ratio"]
    est = diffusion_estimate(np.concatenate(([1.0], b)), norm_ratio=ratio)
    lines = ["N,D,twoD,twoD_parity_avg"]
    for n, d, a in zip(est.N, est.D, est.D_avg):
        lines.append(f"{int(n)},{float(d)!r},{float(2 * d)!r},{float(2 * a)!r}")
    _emit(args, "\n".join(lines) + "\n", "diffusion.csv")
    print(f"2D tail mean (last {args.last}): {est.tail_mean(args.last):.6g}  [{CONJECTURAL_NOTE}]", file=sys.stderr)
    return EXIT_OK


def cmd_stagger(args) -> int:
    seq = _seq(args.seq)
    b = seq.array(args.n_max)[1:]
    dec = decompose_stagger(b, window=args.window)
    lines = ["n,f,s"] + [f"{int(n)},{float(f)!r},{float(s)!r}" for n, f, s in zip(dec.n, dec.f, dec.s)]
    _emit(args, "\n".join(lines) + "\n", "stagger.csv")
    try:
        spec = estimate_stagger_exponent(dec.n, dec.s)
        k = table_order(spec.a, args.dimension)
        print(f"fitted staggering |s_n| ~ {spec.coeff:.4g} (log n)^-{spec.a:.4f}; tabulated first "
              f"divergent derivative ({args.dimension}): {k}", file=sys.stderr)
    except ValueError as exc:
        print(f"no staggering exponent: {exc}", file=sys.stderr)
    return EXIT_OK


def _parse_grid(text: str) -> np.ndarray:
    kind, _, rest = text.partition(":")
    if kind != "log":
        raise ValueError("grid must look like log:LO:HI:COUNT")
    lo, hi, count = rest.split(":")
    return log_grid(float(lo), float(hi), int(count))


def cmd_smoothness(args) -> int:
    if args.stagger_exponent is not None:
        v = smoothness_criterion(args.stagger_exponent, args.dimension, args.derivative)
        rec = {"a": args.stagger_exponent, "dimension": v.dimension, "k": v.k, "verdict": v.verdict,
               "table_k": v.table_k, "table_agrees": v.table_agrees, "upper": v.upper.kind,
               "lower": v.lower.kind, "origin_finite": v.origin_finite}
        _emit(args, _record(rec), "criterion.json")
        return EXIT_OK
    if args.seq is None:
        raise ValueError("give --seq (derivative scaling) or --stagger-exponent (criterion)")
    seq = _seq(args.seq)
    res = derivative_scaling(seq, args.derivative, _parse_grid(args.grid), precision=args.precision)
    n, y = res.series.N.astype(float), res.series.value
    u = np.log(n)
    best = res.best
    lines = ["n,value,log_n,log_log_n,rescaled"]
    for ni, yi, ui in zip(n, y, u):
        if best.model == "LogPower":
            resc = ui ** best.exponent
        elif best.model == "LogLog":
            resc = math.log(ui)
        else:
            resc = 1.0
        lines.append(f"{int(ni)},{float(yi)!r},{float(ui)!r},{math.log(ui)!r},{float(resc)!r}")
    _emit(args, "\n".join(lines) + "\n", f"derivative_{args.derivative}.csv")
    print(f"verdict: {res.verdict}; best {best.model} exponent {best.exponent:.4f} R2 {best.r2:.4f}",
          file=sys.stderr)
    return EXIT_OK


def _parse_set(items):
    out = {}
    for it in items or []:
        key, sep, val = it.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {it!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def cmd_experiment(args) -> int:
    spec = ExperimentSpec(args.name, _parse_set(args.set), args.out or "results")
    cache = CoeffCache(args.cache) if args.cache else None
    res = run_experiment(spec, workers=args.workers, precision=args.precision, cache=cache,
                         memory_budget=int(args.memory_gb * 2**30))
    for c in res.summary["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.6g} "
              f"(expected {c['expected']:.6g} +- {c['tolerance']:.3g}{' rel' if c['relative'] else ''})")
    for f in res.files:
        print(f"wrote {f}", file=sys.stderr)
    if res.summary.get("lanczos_status") in ("memory-budget", "support-limit"):
        return EXIT_RESOURCE
    return EXIT_OK


def cmd_cache(args) -> int:
    cache = CoeffCache(args.cache or ".lanczos-cache")
    if args.action == "list":
        for p in cache.entries():
            print(p)
    else:
        print(f"removed {cache.clear()} entries")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--precision", choices=["auto", "double", "extended"], default="auto",
                        help="floating point for jet recursions (auto: extended above n = 1e5)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for grid points")
    common.add_argument("--out", default=None, help="output file or directory ('-' or omitted: stdout)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="lanczos-gf", parents=[common],
                                description="Green's functions from Lanczos coefficients.",
                                epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_, desc=None):
        return sub.add_parser(name, parents=[common], help=help_, description=desc or help_, epilog=FORMATS,
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    c = add("coeffs", "compute or tabulate Lanczos coefficients b_1..b_N",
            "'ising' runs the infinite-chain Lanczos recursion for H = sum X_i X_(i+1) + g_z Z_i + g_x X_i "
            "from the normalized energy current; any other MODEL is a sequence spec. Writes a coefficient "
            "table (or bare values to stdout).")
    c.add_argument("model", help="'ising' or a sequence spec; " + SEQ_HELP)
    c.add_argument("--gz", type=float, default=-1.05, help="longitudinal field g_z (energy units of the XX coupling)")
    c.add_argument("--gx", type=float, default=0.5, help="transverse field g_x")
    c.add_argument("--op", default="energy-current", help="initial operator (energy-current)")
    c.add_argument("--steps", type=int, required=True, help="number of coefficients N")
    c.add_argument("--prune", type=float, default=0.0, help="relative amplitude pruning threshold (0 = exact)")
    c.add_argument("--memory-gb", type=float, default=DEFAULT_MEMORY_BUDGET / 2**30, help="memory budget in GiB")
    c.add_argument("--cache", default=None, help="coefficient cache directory")
    c.set_defaults(func=cmd_coeffs)

    g = add("greens", "evaluate G_N(z) off the real axis (JSON record)")
    g.add_argument("--seq", required=True, help=SEQ_HELP)
    g.add_argument("--method", choices=["trunc", "mp", "const"], default="mp",
                   help="trunc: b_N = 0; mp: Meixner-Pollaczek tail; const: constant tail b_n = b_N")
    g.add_argument("--level", type=int, required=True, help="stitch/truncation level N")
    g.add_argument("--z", type=_complex, required=True, help="frequency, e.g. 0.5-1i (Im z < 0 for stitching)")
    g.add_argument("--alpha", type=float, default=1.0, help="MP tail slope alpha")
    g.add_argument("--eta", type=float, default=1.0, help="MP tail parameter eta")
    g.set_defaults(func=cmd_greens)

    z = add("zerofreq", "stitched G_N(-i0+) from alternating products (JSON record)")
    z.add_argument("--seq", required=True, help=SEQ_HELP)
    z.add_argument("--method", choices=["mp", "const"], default="const", help="terminator")
    z.add_argument("--level", type=int, required=True, help="stitch level N (>= 2)")
    z.add_argument("--alpha", type=float, default=1.0, help="MP tail slope alpha")
    z.add_argument("--eta", type=float, default=1.0, help="MP tail parameter eta")
    z.add_argument("--M", type=float, default=1.0, help="constant of the zero-frequency error bound")
    z.set_defaults(func=cmd_zerofreq)

    d = add("diffusion", "diffusion constant series D_N = norm_ratio * Pi_N (CSV: N,D,twoD,twoD_parity_avg)")
    d.add_argument("--table", default=None, help="coefficient table (default: Ising energy-current run)")
    d.add_argument("--steps", type=int, default=24, help="Ising steps when no table is given")
    d.add_argument("--gz", type=float, default=-1.05, help="g_z for the Ising run")
    d.add_argument("--gx", type=float, default=0.5, help="g_x for the Ising run")
    d.add_argument("--norm-ratio", type=float, default=None, help="<j,j>/<q,q> (default: from metadata)")
    d.add_argument("--last", type=int, default=6, help="steps in the reported tail mean")
    d.add_argument("--cache", default=None, help="coefficient cache directory")
    d.set_defaults(func=cmd_diffusion)

    s = add("stagger", "split b_n = f_n + (-1)^n s_n (CSV: n,f,s) and fit s_n ~ (log n)^-a")
    s.add_argument("--seq", required=True, help=SEQ_HELP)
    s.add_argument("--n-max", type=int, default=100_000, help="largest index")
    s.add_argument("--window", type=int, default=1, help="binomial smoothing half-width")
    s.add_argument("--dimension", choices=["d1", "dgt1"], default="dgt1", help="growth class for the table lookup")
    s.set_defaults(func=cmd_stagger)

    m = add("smoothness", "derivatives G^(k)(0;n) on a grid (CSV) or the integral criterion (JSON)")
    m.add_argument("--seq", default=None, help=SEQ_HELP)
    m.add_argument("--derivative", type=int, default=1, help="derivative order k")
    m.add_argument("--grid", default="log:1e3:1e7:24", help="log:LO:HI:COUNT (even levels are used)")
    m.add_argument("--stagger-exponent", type=float, default=None,
                   help="evaluate the criterion for s_n = (log n)^-a instead")
    m.add_argument("--dimension", choices=["d1", "dgt1"], default="dgt1", help="growth class for the criterion")
    m.set_defaults(func=cmd_smoothness)

    e = add("experiment", "run a builtin experiment (CSV series + JSON summary + .run.json sidecar)")
    e.add_argument("name", choices=sorted(EXPERIMENTS), help="experiment name")
    e.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a parameter (JSON value)")
    e.add_argument("--cache", default=None, help="coefficient cache directory")
    e.add_argument("--memory-gb", type=float, default=DEFAULT_MEMORY_BUDGET / 2**30, help="memory budget in GiB")
    e.set_defaults(func=cmd_experiment)

    k = add("cache", "list or clear cached coefficient runs")
    k.add_argument("action", choices=["list", "clear"])
    k.add_argument("--cache", default=None, help="cache directory (default .lanczos-cache)")
    k.set_defaults(func=cmd_cache)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MemoryError, ResourceLimit, OverflowError) as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NonConvergence, HorizonError, SingularLevel, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ExperimentError as exc:
        cause = exc.__cause__
        if isinstance(cause, (NonConvergence, HorizonError, SingularLevel, ArithmeticError)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, SequenceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
