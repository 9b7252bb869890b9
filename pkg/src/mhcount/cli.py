"""Command-line driver: one subcommand per pipeline, deterministic artifacts.

Every run writes its data files plus a ``meta.json`` echoing the resolved
options, library versions, seed, and wall time.  Identical options and seed
reproduce the data artifacts byte for byte; floats are serialized with 15
significant digits (12 for the log-radius column of count tables) so runs
can be diffed directly.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np
import scipy

from . import __version__, kernels, transfer
from .core import (
    InvalidInputError,
    InvariantViolationError,
    MHParams,
    apply_move,
    descend,
    order_tuple,
)
from .orbits import (
    LOG_SWITCH,
    box_oracle,
    count_series,
    enumerate_ball,
    find_roots,
    fit_growth_exponent,
)
from .simplex import contraction_audit, limit_set_sample

COUNT_LOGR_DIGITS = 12
FLOAT_DIGITS = 15


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------

def _fmt(x, digits=FLOAT_DIGITS):
    return f"{float(x):.{digits}g}"


def _json_ready(obj):
    """Round floats to 15 significant digits and shed numpy types."""
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(_fmt(obj))
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_json_ready(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_pgm(path, counts):
    """Plain (P2) grayscale raster of a 2-d count histogram, max scaled to 255."""
    counts = np.asarray(counts)
    top = int(counts.max())
    lines = [f"P2", f"{counts.shape[1]} {counts.shape[0]}", "255"]
    for row in counts:
        if top > 0:
            vals = [(int(v) * 255) // top for v in row]
        else:
            vals = [0] * len(row)
        lines.append(" ".join(str(v) for v in vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _word_str(word):
    return "-".join(str(int(j)) for j in word)


def _entries_str(t):
    return " ".join(str(int(v)) for v in t)


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

def _load_config(path):
    """key=value lines; '#' starts a comment; values stay strings here."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise InvalidInputError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}")
    return out


def _apply_config(subparser, cfg):
    """Install config values as subcommand defaults (flags still win)."""
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in cfg.items():
        if key not in actions:
            raise InvalidInputError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except ValueError:
                raise InvalidInputError(f"config key {key!r}: bad value {raw!r}")
        else:
            defaults[key] = raw
    subparser.set_defaults(**defaults)
    for key in defaults:
        actions[key].required = False


def _limit_threads(k):
    try:
        import threadpoolctl

        global _THREAD_LIMIT  # keep the controller alive for the process
        _THREAD_LIMIT = threadpoolctl.threadpool_limits(k)
        return "threadpoolctl"
    except Exception:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(k)
        return "env"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _params(args):
    return MHParams(n=args.n, a=args.a, k=args.k)


def _parse_grid(text):
    if text is None:
        return None
    parts = [p for p in text.split(",") if p]
    vals = tuple(int(p) for p in parts)
    return vals[0] if len(vals) == 1 else vals


def _roots_for(params, r_max, include_exceptional):
    bound = max(int(math.ceil(r_max)), 4)
    rs = find_roots(params, bound=bound)
    base = list(rs.unexceptional)
    if include_exceptional:
        base += list(rs.exceptional)
    return rs, base


def cmd_enumerate(args, out):
    params = _params(args)
    rs, roots = _roots_for(params, args.rmax, args.include_exceptional)
    rows = []
    for node in enumerate_ball(params, roots, args.rmax):
        rows.append(
            [str(node.depth), _word_str(node.word), _entries_str(node.tuple.entries)]
        )
    path = os.path.join(out, "enumerate.csv")
    _write_csv(path, ["depth", "word", "entries"], rows)
    return {"enumerate": path}, {"nodes": len(rows), "roots_note": rs.note}


def cmd_count(args, out):
    params = _params(args)
    if args.logrmax is not None:
        hi = args.logrmax
    elif args.rmax is not None:
        hi = math.log(args.rmax)
    else:
        raise InvalidInputError("need --rmax or --logrmax")
    lo = args.logrmin
    if not lo < hi:
        raise InvalidInputError("need logrmin < log of the radius cap")
    grid = np.linspace(lo, hi, args.points)
    series = count_series(
        params,
        grid,
        switch_at=args.switch_at,
        include_exceptional=args.include_exceptional,
        shard_path=args.shard,
        max_nodes=args.max_nodes,
    )
    rows = [
        [_fmt(lr, COUNT_LOGR_DIGITS), str(int(c)), str(int(bool(flag)))]
        for lr, c, flag in series.rows
    ]
    path = os.path.join(out, "counts.csv")
    _write_csv(path, ["logR", "count", "exact_flag"], rows)
    return {"counts": path}, {"roots_note": series.roots, "series_meta": series.meta}


def cmd_descend(args, out):
    params = _params(args)
    start = tuple(int(v) for v in args.tuple.split(","))
    path_obj = descend(params, start)
    steps = list(path_obj.steps)
    # keep reverse-moving at the maximum inside the compact core until the
    # move stops shrinking it: that terminal tuple is the tree root
    t = path_obj.terminal
    while True:
        y = order_tuple(apply_move(params, t, params.n - 1)).entries
        if y[0] <= 0 or y[-1] >= t[-1]:
            break
        steps.append((params.n - 1, y))
        t = y
    rows = [["0", "", _entries_str(path_obj.start)]]
    word = []
    for depth, (j, tup) in enumerate(steps, start=1):
        word.append(j + 1)  # 1-based move index, matching enumerate words
        rows.append([str(depth), _word_str(word), _entries_str(tup)])
    path = os.path.join(out, "descend.csv")
    _write_csv(path, ["depth", "word", "entries"], rows)
    return {"descend": path}, {"terminal": list(t)}


def cmd_roots(args, out):
    params = _params(args)
    rs = find_roots(params, bound=args.bound)
    rows = [["0", "", _entries_str(t)] for t in rs.unexceptional]
    path = os.path.join(out, "roots.csv")
    _write_csv(path, ["depth", "word", "entries"], rows)
    extra = {
        "note": rs.note,
        "exceptional": [list(map(int, t)) for t in rs.exceptional],
    }
    return {"roots": path}, extra


def cmd_beta(args, out):
    op = transfer.TransferOperator(args.n, _parse_grid(args.grid), args.amax)
    result = transfer.solve_beta(
        args.n, tol=args.tol, operator=op, power_tol=args.power_tol
    )
    payload = dict(result.config)
    payload.update(
        {
            "beta": result.beta,
            "bracket": list(result.bracket),
            "trace": [[s, lam] for s, lam in result.trace],
            "evals": len(result.trace),
            "note": result.note,
        }
    )
    if result.beta is not None:
        final = op.leading_eigen(result.beta, tol=args.power_tol)
        payload.update(
            {
                "s": result.beta,
                "lambda": final.lam,
                "residual": final.residual,
                "iterations": final.iterations,
            }
        )
    path = os.path.join(out, "beta.json")
    _write_json(path, payload)
    return {"beta": path}, {}


def cmd_eig(args, out):
    op = transfer.TransferOperator(args.n, _parse_grid(args.grid), args.amax)
    res = op.leading_eigen(args.s, tol=args.tol)
    payload = dict(res.config)
    payload.update(
        {
            "lambda": res.lam,
            "residual": res.residual,
            "iterations": res.iterations,
            "h_min": float(res.h.min()),
            "h_sup": float(res.h.max()),
        }
    )
    if args.with_measure:
        nu, lam_dual, its, resid = op.eigenmeasure(args.s, tol=args.tol)
        payload.update(
            {
                "dual_lambda": lam_dual,
                "dual_residual": resid,
                "dual_iterations": its,
                "pairing": float(nu @ res.h),
            }
        )
    path = os.path.join(out, "eig.json")
    _write_json(path, payload)
    return {"eig": path}, {}


def cmd_audit(args, out):
    report = contraction_audit(
        args.n,
        sample_count=args.samples,
        rng_seed=args.seed,
        a_cap=args.acap,
        composite_words=args.words,
    )
    path = os.path.join(out, "audit.json")
    _write_json(path, report)
    return {"audit": path}, {}


def cmd_limitset(args, out):
    points = limit_set_sample(
        args.n,
        args.depth,
        count=args.count,
        rng_seed=args.seed,
        a_cap=args.acap,
        exhaustive=args.exhaustive,
    )
    m = args.n - 2
    header = [f"w{i + 1}" for i in range(m)]
    rows = [[_fmt(v) for v in p.w] for p in points]
    path = os.path.join(out, "limitset.csv")
    _write_csv(path, header, rows)
    artifacts = {"limitset": path}
    if args.raster:
        if m < 2:
            raise InvalidInputError("raster projection needs n >= 4 (two free coordinates)")
        coords = np.array([[p.w[m - 2], p.w[m - 1]] for p in points])
        counts, _, _ = np.histogram2d(
            coords[:, 0], coords[:, 1], bins=args.raster, range=[[0.0, 0.5], [0.0, 0.5]]
        )
        pgm = os.path.join(out, "limitset.pgm")
        _write_pgm(pgm, counts.astype(np.int64))
        artifacts["raster"] = pgm
    return artifacts, {"points": len(points)}


def cmd_gauss_check(args, out):
    gap = transfer.gauss_conjugation_check(
        args.s, grid_points=args.grid_points, a_max=args.amax
    )
    lam, _, _ = transfer.gauss_leading_eigen(
        args.s, grid_points=args.eig_grid_points, a_max=args.amax
    )
    payload = {
        "s": args.s,
        "conjugation_gap": gap,
        "lambda": lam,
        "grid_points": args.grid_points,
        "eig_grid_points": args.eig_grid_points,
        "a_max": args.amax,
    }
    path = os.path.join(out, "gauss.json")
    _write_json(path, payload)
    return {"gauss": path}, {}


def cmd_fit(args, out):
    rows = []
    try:
        with open(args.input) as fh:
            header = fh.readline().strip().split(",")
            if header[:2] != ["logR", "count"]:
                raise InvalidInputError(f"{args.input}: not a counts CSV")
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) < 2:
                    continue
                rows.append((float(parts[0]), int(parts[1])))
    except OSError as exc:
        raise InvalidInputError(
            f"missing counts input {args.input}: run the count command first ({exc})"
        )
    if args.min_logr is not None:
        rows = [r for r in rows if r[0] >= args.min_logr]
    beta_hat, amplitude, rms = fit_growth_exponent(rows)
    payload = {
        "beta_hat": beta_hat,
        "amplitude": amplitude,
        "rms": rms,
        "rows_used": len([r for r in rows if r[1] > 0 and r[0] > 1.0]),
        "input": args.input,
    }
    path = os.path.join(out, "fit.json")
    _write_json(path, payload)
    return {"fit": path}, {}


_COMMANDS = {
    "enumerate": cmd_enumerate,
    "count": cmd_count,
    "descend": cmd_descend,
    "roots": cmd_roots,
    "beta": cmd_beta,
    "eig": cmd_eig,
    "audit": cmd_audit,
    "limitset": cmd_limitset,
    "gauss-check": cmd_gauss_check,
    "fit": cmd_fit,
}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--config", default=None, help="key=value defaults file")

    parser = argparse.ArgumentParser(
        prog="mhcount",
        description="integer points on Markoff-Hurwitz surfaces and their growth exponent",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    table = {}

    def sub(name, **kw):
        p = subs.add_parser(name, parents=[common], **kw)
        table[name] = p
        return p

    p = sub("enumerate", help="orbit nodes with entries inside a radius")
    for flag in ("--n", "--a", "--k"):
        p.add_argument(flag, type=int, required=True)
    p.add_argument("--rmax", type=float, required=True)
    p.add_argument("--include-exceptional", action="store_true")

    p = sub("count", help="cumulative solution counts on a log-radius grid")
    for flag in ("--n", "--a", "--k"):
        p.add_argument(flag, type=int, required=True)
    p.add_argument("--rmax", type=float, default=None)
    p.add_argument("--logrmax", type=float, default=None)
    p.add_argument("--logrmin", type=float, default=math.log(10.0))
    p.add_argument("--points", type=int, default=24)
    p.add_argument("--switch-at", type=float, default=LOG_SWITCH)
    p.add_argument("--include-exceptional", action="store_true")
    p.add_argument("--shard", default=None, help="checkpoint file for resumable runs")
    p.add_argument("--max-nodes", type=int, default=20_000_000)

    p = sub("descend", help="reverse-move a tuple down to its root")
    for flag in ("--n", "--a", "--k"):
        p.add_argument(flag, type=int, required=True)
    p.add_argument("--tuple", required=True, help="comma-separated entries")

    p = sub("roots", help="base tuples of the orbit forest")
    for flag in ("--n", "--a", "--k"):
        p.add_argument(flag, type=int, required=True)
    p.add_argument("--bound", type=int, default=None)

    p = sub("beta", help="growth exponent from the spectral root")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--grid", default=None, help="nodes per axis, comma-separated")
    p.add_argument("--amax", type=int, default=None)
    p.add_argument("--power-tol", type=float, default=transfer.POWER_TOL)

    p = sub("eig", help="leading eigendata at a fixed exponent")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--grid", default=None)
    p.add_argument("--amax", type=int, default=None)
    p.add_argument("--tol", type=float, default=transfer.POWER_TOL)
    p.add_argument("--with-measure", action="store_true")

    p = sub("audit", help="derivative-bound audit of the projective action")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--words", type=int, default=10_000)
    p.add_argument("--acap", type=int, default=64)

    p = sub("limitset", help="limit-set samples and optional density raster")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--acap", type=int, default=64)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--raster", type=int, default=0, help="PGM grid size (0 = none)")

    p = sub("gauss-check", help="conjugation identity against the classical operator")
    p.add_argument("--s", type=float, default=2.0)
    p.add_argument("--grid-points", type=int, default=64)
    p.add_argument("--eig-grid-points", type=int, default=512)
    p.add_argument("--amax", type=int, default=512)

    p = sub("fit", help="power-law exponent from a counts CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--min-logr", type=float, default=None)

    return parser, table


def _prescan_config(argv, table):
    """Find the subcommand and any --config path without a full parse.

    Config must be applied before parsing so it can satisfy required flags.
    """
    command = argv[0] if argv and argv[0] in table else None
    config = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
    return command, config


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    parser, table = build_parser()
    command, config = _prescan_config(argv, table)
    if command and config:
        try:
            _apply_config(table[command], _load_config(config))
        except InvalidInputError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    args = parser.parse_args(argv)

    started = time.time()
    mechanism = _limit_threads(max(1, args.threads))
    try:
        os.makedirs(args.out, exist_ok=True)
        artifacts, extra = _COMMANDS[args.command](args, args.out)
    except (InvalidInputError, InvariantViolationError, transfer.ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    options = {
        k: v for k, v in vars(args).items() if k not in ("command", "config")
    }
    meta = {
        "command": args.command,
        "options": options,
        "seed": args.seed,
        "threads": {"requested": args.threads, "mechanism": mechanism},
        "versions": {
            "mhcount": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "kernel_backend": kernels.BACKEND,
        "artifacts": {k: os.path.basename(v) for k, v in artifacts.items()},
        "wall_time_s": time.time() - started,
    }
    meta.update(extra)
    _write_json(os.path.join(args.out, "meta.json"), meta)
    return 0


if __name__ == "__main__":
    sys.exit(main())
