"""Forward enumeration of move orbits and ball counting.

Everything here works on ordered (non-decreasing) positive tuples.  A child
of x replaces one of the n-1 smallest entries by a*prod(others) - entry and
is kept only when the new entry strictly exceeds max(x); reversing that step
recovers the parent uniquely, so the orbit forest is a partition of the
positive solutions and enumeration from the root set is exact.  Deep counts
switch from big integers to a logarithmic representation with tracked error
bounds once the small-entry product is large enough.
"""

import csv
import math
import os
from bisect import bisect_left, bisect_right
from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (
    InvalidInputError,
    InvariantViolationError,
    MHParams,
    MHTuple,
    _entries,
    _param_cache,
    _root_candidates,
    eval_residual,
    is_exceptional,
    log_int,
    outside_K0,
)

# exact -> log switchover (natural log of the small-entry product)
LOG_SWITCH = 30.0
# relative slack assigned to each freshly converted log entry
LOG_CONV_REL = 4e-15


def _c1(n):
    """Validity threshold for the log-space linearization."""
    return max(2.0 * math.sqrt(n - 1), 10.0)


def _c2(n):
    """Coefficient of the alpha^-2 error increment."""
    return float(n)


class LogRegimeRefusal(RuntimeError):
    """Signal that a log-space step is not certified; caller must stay exact."""


@dataclass(slots=True)
class OrbitNode:
    """One enumerated point: an exact tuple or its log image, plus provenance."""

    tuple: MHTuple = None
    log_repr: tuple = None
    log_errs: tuple = None
    error_bound: float = 0.0
    word: tuple = ()
    depth: int = 0

    def __post_init__(self):
        if (self.tuple is None) == (self.log_repr is None):
            raise InvalidInputError("node needs exactly one of tuple/log_repr")
        if self.log_repr is not None and self.log_errs is None:
            self.log_errs = (0.0,) * len(self.log_repr)


@dataclass(frozen=True)
class RootSet:
    """Base tuples of the orbit forest, split by family membership."""

    unexceptional: tuple
    exceptional: tuple = ()
    note: str = ""

    def __iter__(self):
        return iter(self.unexceptional)

    def __len__(self):
        return len(self.unexceptional)


@dataclass
class CountSeries:
    """Cumulative ordered-solution counts on a log-radius grid."""

    rows: list  # (log_r, count, exact_flag)
    params: MHParams
    roots: str = ""
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# moves and children
# ---------------------------------------------------------------------------

def _children_raw(a, t):
    """(j, value) for every move on the n-1 smallest entries of ordered t."""
    prods = []
    total = a
    for v in t:
        total *= v
    out = []
    for j in range(len(t) - 1):
        v = total // t[j] - t[j]
        out.append((j, v))
    return out


def _growing_children(a, t):
    """Children whose new entry strictly exceeds max(t), as ordered tuples."""
    top = t[-1]
    kids = []
    for j, v in _children_raw(a, t):
        if v > top:
            kids.append((j, t[:j] + t[j + 1 :] + (v,)))
    return kids


def forward_moves(params, node):
    """Order-normalized children of an exact node, duplicates removed.

    Children that fail to increase the maximum are dropped silently when the
    parent sits inside the control region (where the descent guarantees do
    not apply); outside it they violate the growth guarantee and raise.
    """
    if not isinstance(node, OrbitNode):
        node = OrbitNode(tuple=MHTuple(_entries(node), ordered=True))
    if node.tuple is None:
        raise InvalidInputError("forward_moves needs an exact node")
    t = _entries(node.tuple)
    if eval_residual(params, t) != 0:
        raise InvalidInputError("node is not on the variety")
    if any(v < 1 for v in t) or any(t[i] > t[i + 1] for i in range(len(t) - 1)):
        raise InvalidInputError("node must be ordered and positive")
    strict = outside_K0(params, t) and not is_exceptional(params, t)
    top = t[-1]
    out, seen = [], set()
    for j, v in _children_raw(params.a, t):
        if v <= top:
            if strict:
                raise InvariantViolationError(
                    f"move {j + 1} on {t} gave {v}, not above max {top}"
                )
            continue
        child = t[:j] + t[j + 1 :] + (v,)
        if child in seen:
            continue
        seen.add(child)
        out.append(
            OrbitNode(
                tuple=MHTuple(child, ordered=True),
                word=node.word + (j + 1,),
                depth=node.depth + 1,
            )
        )
    out.sort(key=lambda nd: _entries(nd.tuple))
    return out


# ---------------------------------------------------------------------------
# roots
# ---------------------------------------------------------------------------

def _is_root(params, t):
    """True when the reverse move at the max does not give a valid parent."""
    if t[-2] == t[-1]:
        return True
    b = params.a
    for v in t[:-1]:
        b *= v
    v = b - t[-1]
    return not (1 <= v <= t[-2])


def _family_roots_upto(params, bound):
    """Root members of the degenerate families with max entry <= bound."""
    n, a, k = params.n, params.a, params.k
    if a == 1:
        m2, base = k - n - 1, (1,) * (n - 3) + (2,)
    elif a == 2:
        m2, base = k - n + 2, (1,) * (n - 2)
    else:
        return []
    if m2 < 0:
        return []
    m = math.isqrt(m2)
    if m * m != m2:
        return []
    out = []
    for t in range(1, bound + 1):
        tup = tuple(sorted(base + (t, t + m)))
        if tup[-1] <= bound and eval_residual(params, tup) == 0 and _is_root(params, tup):
            out.append(tup)
    return out


def _default_root_bound(params):
    state = _param_cache(params.n, params.a, params.k)
    b = state.x_radius
    for c in _root_candidates(params):
        b = max(b, c[-1] + 1)
    return b


def find_roots(params, bound=None):
    """Minimal elements of the orbit forest, split by family membership.

    The unexceptional roots come from the finite reverse-move failure
    regions and are complete regardless of the bound; family roots are
    scanned up to the bound (they can form infinite ladders).
    """
    if bound is None:
        bound = _default_root_bound(params)
    seen = set()
    unexc, exc = [], []
    cands = list(_root_candidates(params)) + _family_roots_upto(params, bound)
    for t in sorted(set(cands)):
        if t in seen or t[-1] > bound:
            continue
        seen.add(t)
        if not _is_root(params, t):
            continue
        if is_exceptional(params, t):
            exc.append(MHTuple(t, ordered=True))
        else:
            unexc.append(MHTuple(t, ordered=True))
    note = "" if unexc else "no unexceptional roots: orbit part possibly empty or finite"
    return RootSet(tuple(unexc), tuple(exc), note)


def _root_tuples(roots):
    if isinstance(roots, RootSet):
        return [_entries(t) for t in roots.unexceptional]
    return [_entries(t) for t in roots]


# ---------------------------------------------------------------------------
# exact enumeration and oracles
# ---------------------------------------------------------------------------

def enumerate_ball(params, roots, r_max):
    """Yield every orbit node with max entry <= r_max exactly once.

    Breadth-first by depth, ties resolved by the lexicographic move word.
    A tuple reached twice from a parent with distinct entries means the
    forest is not free and raises.
    """
    start = []
    for t in _root_tuples(roots):
        if eval_residual(params, t) != 0 or any(v < 1 for v in t):
            raise InvalidInputError(f"root {t} is not a positive solution")
        if t[-1] <= r_max:
            start.append(t)
    queue = deque(
        OrbitNode(tuple=MHTuple(t, ordered=True)) for t in sorted(start)
    )
    seen = set(sorted(start))
    if len(seen) != len(start):
        raise InvalidInputError("duplicate roots")
    while queue:
        node = queue.popleft()
        yield node
        t = _entries(node.tuple)
        kept = []
        for j, child in _dedup(_growing_children(params.a, t), t):
            if child in seen:
                raise InvariantViolationError(
                    f"freeness violation: {child} reached twice"
                )
            seen.add(child)
            if child[-1] <= r_max:
                kept.append((child, j))
        kept.sort()
        for child, j in kept:
            queue.append(
                OrbitNode(
                    tuple=MHTuple(child, ordered=True),
                    word=node.word + (j + 1,),
                    depth=node.depth + 1,
                )
            )


def _ordered_tuples(slots, lo, hi):
    """Non-decreasing integer tuples of the given length with entries in [lo, hi]."""
    if slots == 0:
        yield ()
        return
    for v in range(lo, hi + 1):
        for rest in _ordered_tuples(slots - 1, v, hi):
            yield (v,) + rest


def box_oracle(params, r_max):
    """All ordered positive solutions with max entry <= r_max, by direct scan.

    Independent of the move structure: the first n-1 entries are scanned and
    the last is solved from its quadratic, all in exact integers.
    """
    n, a, k = params.n, params.a, params.k
    out = set()
    for prefix in _ordered_tuples(n - 1, 1, r_max):
        b = a
        for v in prefix:
            b *= v
        c = sum(v * v for v in prefix) - k
        disc = b * b - 4 * c
        if disc < 0:
            continue
        d = math.isqrt(disc)
        if d * d != disc:
            continue
        for z in ((b - d) // 2, (b + d) // 2):
            if prefix[-1] <= z <= r_max:
                out.add(MHTuple(prefix + (z,), ordered=True))
            if d == 0:
                break
    return out


def ordered_multiplicity(n, t):
    """Number of coordinate orderings of an ordered tuple: n!/prod(mult!)."""
    m = math.factorial(n)
    for c in Counter(t).values():
        m //= math.factorial(c)
    return m


def _minus_solutions(params, r_max):
    """Ordered positive solutions of sum(x^2) + a*prod(x) = k (sign-flipped orbits)."""
    n, a, k = params.n, params.a, params.k
    if k <= 0:
        return []
    cap = min(r_max, math.isqrt(max(0, k - (n - 1))))
    out = []
    for prefix in _ordered_tuples(n - 1, 1, cap):
        b = a
        for v in prefix:
            b *= v
        c = sum(v * v for v in prefix) - k
        disc = b * b - 4 * c
        if disc < 0:
            continue
        d = math.isqrt(disc)
        if d * d != disc:
            continue
        z = (d - b) // 2
        if prefix[-1] <= z <= r_max and z * z + b * z + c == 0:
            out.append(prefix + (z,))
    return out


def _zero_coordinate_count(params, r_max):
    """Integer tuples with some zero entry, |entries| <= r_max, sum of squares k."""
    n, k = params.n, params.k
    if k < 0:
        return 0

    from functools import lru_cache

    @lru_cache(maxsize=None)
    def r_any(m, t):
        if m == 0:
            return 1 if t == 0 else 0
        total = 0
        v = 0
        while v * v <= t and v <= r_max:
            c = r_any(m - 1, t - v * v)
            total += c if v == 0 else 2 * c
            v += 1
        return total

    @lru_cache(maxsize=None)
    def r_nonzero(m, t):
        if m == 0:
            return 1 if t == 0 else 0
        total = 0
        v = 1
        while v * v <= t and v <= r_max:
            total += 2 * r_nonzero(m - 1, t - v * v)
            v += 1
        return total

    return r_any(n, k) - r_nonzero(n, k)


def count_integer_ball(params, r_max, include_exceptional=False):
    """Exact count of integer solutions with all |x_i| <= r_max.

    Positive orbits are expanded over orderings and even sign flips
    (2^(n-1) each); odd sign patterns come from the sign-flipped equation
    and zero-coordinate solutions are counted by bounded search.  With the
    default flag the family orbits are left out of the positive part, as in
    the counting law.
    """
    roots = find_roots(params, bound=max(_default_root_bound(params), r_max))
    base = list(roots.unexceptional)
    if include_exceptional:
        base += list(roots.exceptional)
    pos = 0
    for node in enumerate_ball(params, base, r_max):
        pos += ordered_multiplicity(params.n, _entries(node.tuple))
    minus = sum(ordered_multiplicity(params.n, t) for t in _minus_solutions(params, r_max))
    zeros = _zero_coordinate_count(params, r_max)
    return (pos + minus) * 2 ** (params.n - 1) + zeros


def signed_box_count(params, r_max):
    """Kernel-backed brute scan of all integer solutions in the signed box."""
    return kernels.signed_box_count(params.n, params.a, params.k, r_max)


# ---------------------------------------------------------------------------
# log-space representation
# ---------------------------------------------------------------------------

def _logs_from_exact(t):
    logs = tuple(log_int(v) for v in t)
    errs = tuple(LOG_CONV_REL * (abs(x) + 1.0) for x in logs)
    return logs, errs


def log_node_from_exact(params, node):
    """Convert an exact node to its log representation (entries must be distinct)."""
    t = _entries(node.tuple)
    if len(set(t)) != len(t):
        raise InvalidInputError("log representation requires distinct entries")
    logs, errs = _logs_from_exact(t)
    la = _log_alpha_lb(params, logs, errs)
    if la < math.log(_c1(params.n)):
        raise LogRegimeRefusal(f"alpha lower bound {la:.3g} below threshold")
    return OrbitNode(
        log_repr=logs,
        log_errs=errs,
        error_bound=max(errs),
        word=node.word,
        depth=node.depth,
    )


def _log_alpha_lb(params, logs, errs):
    n = params.n
    return math.log(params.a) + math.fsum(
        logs[i] - errs[i] for i in range(n - 2)
    )


def _advance_logs(params, logs, errs, j):
    """One move in log space; returns (logs', errs') or raises LogRegimeRefusal."""
    n = params.n
    if not 0 <= j <= n - 2:
        raise InvalidInputError(f"log-space move index {j} out of range")
    la = _log_alpha_lb(params, logs, errs)
    if la < math.log(_c1(n)):
        raise LogRegimeRefusal(f"alpha lower bound {la:.3g} below threshold")
    s_other = math.log(params.a) + math.fsum(logs[i] for i in range(n) if i != j)
    e_other = math.fsum(errs[i] for i in range(n) if i != j)
    log_u = (logs[j] + errs[j]) - (s_other - e_other)
    if log_u > math.log(0.5):
        raise LogRegimeRefusal("dropped term not certified below 1/2")
    u_hat = math.exp(log_u)
    new_err = e_other + 2.0 * u_hat + 4.0 * np.finfo(float).eps * abs(s_other)
    if s_other <= logs[-1]:
        raise InvariantViolationError("log-space move failed to grow the max")
    new_logs = logs[:j] + logs[j + 1 :] + (s_other,)
    new_errs = errs[:j] + errs[j + 1 :] + (new_err,)
    return new_logs, new_errs


def log_space_advance(params, node, j):
    """Apply move j to a log-represented node, growing the error bound.

    The move index is 0-based over the n-1 smallest entries, as in
    forward_moves.  Refuses (LogRegimeRefusal) when the tracked lower bound
    on the small-entry product cannot certify the linearization.
    """
    if node.log_repr is None:
        raise InvalidInputError("log_space_advance needs a log-represented node")
    logs, errs = _advance_logs(params, node.log_repr, node.log_errs, j)
    return OrbitNode(
        log_repr=logs,
        log_errs=errs,
        error_bound=max(errs),
        word=node.word + (j + 1,),
        depth=node.depth + 1,
    )


# ---------------------------------------------------------------------------
# deep counting
# ---------------------------------------------------------------------------

def _series_header(params, grid, switch_at):
    gtxt = ";".join(f"{g:.6f}" for g in grid)
    return f"#series,{params.n},{params.a},{params.k},{switch_at:.3f},{gtxt}"


def _dump_checkpoint(path, header, hist, flags, queue, done):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        fh.write(header + "\n")
        fh.write("#hist," + ";".join(str(v) for v in hist) + ","
                 + ";".join("1" if f else "0" for f in flags) + "\n")
        for kind, payload in queue:
            if kind == "x":
                w.writerow(["x"] + [str(v) for v in payload])
            else:
                logs, errs = payload
                w.writerow(["l"] + [repr(v) for v in logs] + [repr(e) for e in errs])
        fh.write("#complete\n" if done else "#frontier\n")
    os.replace(tmp, path)


def _load_checkpoint(path, header, n):
    if not os.path.exists(path):
        return None
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != header or len(lines) < 3:
        return None
    status = lines[-1]
    if status not in ("#complete", "#frontier"):
        return None
    _, histtxt, flagtxt = lines[1].split(",")
    hist = [int(v) for v in histtxt.split(";")]
    flags = [v == "1" for v in flagtxt.split(";")]
    queue = deque()
    for row in csv.reader(lines[2:-1]):
        if row[0] == "x":
            queue.append(("x", tuple(int(v) for v in row[1:])))
        else:
            vals = [float(v) for v in row[1:]]
            queue.append(("l", (tuple(vals[:n]), tuple(vals[n:]))))
    return hist, flags, queue, status == "#complete"


def count_series(
    params,
    log_r_grid,
    roots=None,
    switch_at=LOG_SWITCH,
    include_exceptional=False,
    shard_path=None,
    checkpoint_every=200000,
    max_nodes=20_000_000,
):
    """Cumulative counts of ordered solutions at each log-radius cutoff.

    Nodes are weighted by their number of coordinate orderings, so the rows
    match the positive part of count_integer_ball.  Beyond the switch
    threshold the walk continues in log space; a row's exact flag drops when
    some node's error window straddles that cutoff.
    """
    grid = [float(g) for g in log_r_grid]
    if not grid or any(grid[i] >= grid[i + 1] for i in range(len(grid) - 1)):
        raise InvalidInputError("log_r_grid must be strictly increasing and nonempty")
    n, a = params.n, params.a
    if roots is None:
        rs = find_roots(params)
        roots_note = "unexceptional roots: " + ", ".join(
            str(_entries(t)) for t in rs.unexceptional
        )
        base = list(rs.unexceptional)
        if include_exceptional:
            base += list(rs.exceptional)
            roots_note += " + family roots"
    else:
        base = list(roots)
        roots_note = "caller-supplied roots"

    header = _series_header(params, grid, switch_at)
    state = _load_checkpoint(shard_path, header, n) if shard_path else None
    if state is not None:
        hist, flags, queue, done = state
        if done:
            rows = _rows_from_hist(grid, hist, flags)
            return CountSeries(rows, params, roots_note, {"resumed": True})
    else:
        hist = [0] * len(grid)
        flags = [True] * len(grid)
        queue = deque()
        seen = set()
        for t in sorted(_root_tuples(base)):
            if t in seen:
                continue
            seen.add(t)
            queue.append(("x", t))

    top = grid[-1]
    processed = 0
    log_c1 = math.log(_c1(n))
    while queue:
        kind, payload = queue.popleft()
        processed += 1
        if processed > max_nodes:
            raise InvariantViolationError("node budget exhausted; raise max_nodes")
        if kind == "x":
            t = payload
            lmax = log_int(t[-1])
            if lmax > top:
                continue
            hist[bisect_left(grid, lmax)] += ordered_multiplicity(n, t)
            for _, child in _dedup(_growing_children(a, t), t):
                if len(set(child)) == len(child):
                    logs, errs = _logs_from_exact(child)
                    if (
                        _log_alpha_lb(params, logs, errs) >= max(switch_at, log_c1)
                    ):
                        queue.append(("l", (logs, errs)))
                        continue
                queue.append(("x", child))
        else:
            logs, errs = payload
            lmax, err = logs[-1], errs[-1]
            if lmax - err > top:
                continue
            lo = bisect_left(grid, lmax - err)
            hi = bisect_right(grid, lmax + err)
            for i in range(lo, min(hi, len(grid))):
                flags[i] = False
            if lmax <= top:
                hist[bisect_left(grid, lmax)] += math.factorial(n)
            for j in range(n - 1):
                queue.append(("l", _advance_logs(params, logs, errs, j)))
        if shard_path and processed % checkpoint_every == 0:
            _dump_checkpoint(shard_path, header, hist, flags, queue, done=False)

    if shard_path:
        _dump_checkpoint(shard_path, header, hist, flags, queue, done=True)
    rows = _rows_from_hist(grid, hist, flags)
    return CountSeries(rows, params, roots_note, {"nodes": processed})


def _dedup(children, parent):
    tied = len(set(parent)) < len(parent)
    seen = set()
    for j, child in children:
        if child in seen:
            if not tied:
                raise InvariantViolationError(
                    f"freeness violation: duplicate child {child} of {parent}"
                )
            continue
        seen.add(child)
        yield j, child


def _rows_from_hist(grid, hist, flags):
    rows, run = [], 0
    for g, h, f in zip(grid, hist, flags):
        run += h
        rows.append((g, run, f))
    return rows


# ---------------------------------------------------------------------------
# growth-exponent fit
# ---------------------------------------------------------------------------

def fit_growth_exponent(series):
    """Least-squares slope of log(count) against log(log R).

    Returns (beta_hat, c_hat, rms).  Rows with nonpositive counts or
    log R <= 1 cannot enter the fit and raise if fewer than three remain.
    """
    rows = series.rows if isinstance(series, CountSeries) else list(series)
    xs, ys = [], []
    for row in rows:
        log_r, count = row[0], row[1]
        if count > 0 and log_r > 1.0:
            xs.append(math.log(log_r))
            ys.append(math.log(count))
    if len(xs) < 3 or len(set(xs)) < 2:
        raise InvalidInputError("need at least three usable rows with distinct log R")
    design = np.column_stack([np.asarray(xs), np.ones(len(xs))])
    sol, *_ = np.linalg.lstsq(design, np.asarray(ys), rcond=None)
    beta_hat, intercept = float(sol[0]), float(sol[1])
    resid = design @ sol - np.asarray(ys)
    rms = float(np.sqrt(np.mean(resid**2)))
    return beta_hat, math.exp(intercept), rms
