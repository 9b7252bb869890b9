"""Exact integer arithmetic on Markoff-Hurwitz varieties.

The variety V(n, a, k) is the set of integer tuples satisfying

    x_1^2 + ... + x_n^2 = a * x_1 * ... * x_n + k,        n >= 3, a >= 1.

Everything in this module is exact: entries are Python ints (arbitrary
precision), and the only floating point appears in the normalized-coordinate
inequalities that decide whether a tuple lies outside the compact control box
K0 (those are evaluated with an explicit relative slack that errs toward
"inside K0", which only ever shortens a descent by one step).

Normalized coordinates: z = a^(1/(n-2)) * x turns the equation into
z_1^2+...+z_n^2 = z_1*...*z_n + k' with k' = k * a^(2/(n-2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

__all__ = [
    "MHParams",
    "MHTuple",
    "DescentPath",
    "InvalidInputError",
    "InvariantViolationError",
    "eval_residual",
    "apply_move",
    "order_tuple",
    "is_fundamental_exceptional",
    "is_exceptional",
    "outside_K0",
    "descend",
    "descend_to_root",
    "sign_orbit_reduce",
    "log_int",
    "prop22_violations",
]

# Relative slack for the floating-point K0 inequalities; doubt resolves to
# "inside K0" so descent never overshoots on a borderline tuple.
K0_SLACK = 1e-9


class InvalidInputError(ValueError):
    """Inputs outside an operation's contract (bad params, non-solutions...)."""


class InvariantViolationError(RuntimeError):
    """An exact invariant (strict descent, unique maximum...) failed."""


@dataclass(frozen=True)
class MHParams:
    """Parameters (n, a, k) of the variety."""

    n: int
    a: int
    k: int

    def __post_init__(self) -> None:
        if not (isinstance(self.n, int) and isinstance(self.a, int) and isinstance(self.k, int)):
            raise InvalidInputError("n, a, k must be integers")
        if self.n < 3:
            raise InvalidInputError(f"need n >= 3, got n={self.n}")
        if self.a < 1:
            raise InvalidInputError(f"need a >= 1, got a={self.a}")

    @property
    def log_z_scale(self) -> float:
        """log of the normalization factor a^(1/(n-2))."""
        return math.log(self.a) / (self.n - 2)

    @property
    def kprime(self) -> float:
        """Constant term of the normalized equation, k * a^(2/(n-2))."""
        return self.k * math.exp(2.0 * self.log_z_scale)


@dataclass(frozen=True)
class MHTuple:
    """An integer tuple on the variety; `ordered` means non-decreasing entries."""

    entries: tuple
    ordered: bool = False

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


@dataclass
class DescentPath:
    """Record of a descent: (moved index, resulting ordered tuple) per step."""

    start: tuple
    steps: list = field(default_factory=list)

    @property
    def terminal(self) -> tuple:
        return self.steps[-1][1] if self.steps else self.start


def _entries(x) -> tuple:
    """Accept MHTuple or any int sequence, return a plain tuple of ints."""
    if isinstance(x, MHTuple):
        return x.entries
    t = tuple(x)
    for v in t:
        if not isinstance(v, int):
            raise InvalidInputError(f"tuple entries must be ints, got {type(v).__name__}")
    return t


def _check_len(params: MHParams, x: tuple) -> None:
    if len(x) != params.n:
        raise InvalidInputError(f"expected {params.n} entries, got {len(x)}")


def eval_residual(params: MHParams, x) -> int:
    """Exact residual sum(x_i^2) - a*prod(x_i) - k; zero iff x is on the variety."""
    t = _entries(x)
    _check_len(params, t)
    prod = 1
    for v in t:
        prod *= v
    return sum(v * v for v in t) - params.a * prod - params.k


def order_tuple(x) -> MHTuple:
    """Sort entries non-decreasingly (stable) and return an ordered MHTuple."""
    t = _entries(x)
    return MHTuple(tuple(sorted(t)), ordered=True)


def apply_move(params: MHParams, x, j: int) -> MHTuple:
    """Replace x_j by a * prod(x_i, i != j) - x_j (an involution on the variety).

    Positions are 0-based and the entry order is preserved; the result's
    `ordered` flag reflects whether it happens to be sorted.
    """
    t = _entries(x)
    _check_len(params, t)
    if not 0 <= j < params.n:
        raise InvalidInputError(f"move index {j} out of range for n={params.n}")
    if eval_residual(params, t) != 0:
        raise InvalidInputError("apply_move requires a tuple on the variety (residual != 0)")
    prod = 1
    for i, v in enumerate(t):
        if i != j:
            prod *= v
    new = params.a * prod - t[j]
    out = t[:j] + (new,) + t[j + 1 :]
    return MHTuple(out, ordered=all(out[i] <= out[i + 1] for i in range(len(out) - 1)))


# ---------------------------------------------------------------------------
# logs of big integers
# ---------------------------------------------------------------------------

def log_int(x: int) -> float:
    """Natural log of a positive int, safe for values far beyond float range."""
    if x <= 0:
        raise InvalidInputError("log_int needs a positive integer")
    nbits = x.bit_length()
    if nbits <= 52:
        return math.log(x)
    shift = nbits - 52
    return math.log(x >> shift) + shift * math.log(2.0)


def _log_z(params: MHParams, v: int) -> float:
    return log_int(v) + params.log_z_scale


# ---------------------------------------------------------------------------
# the K0 control region
# ---------------------------------------------------------------------------

def _analytic_outside(params: MHParams, x: tuple) -> bool:
    """Normalized-coordinate inequalities that hold outside K0.

    Evaluated in floating point on logs with relative slack K0_SLACK; the two
    conditions that compare against k are exact integer comparisons.
    """
    n = params.n
    xs = x  # assumed ordered ascending, positive
    # exact: sum of the first n-1 squares dominates k, and x_{n-1}^2 > |k|
    if sum(v * v for v in xs[:-1]) < params.k:
        return False
    if xs[-2] * xs[-2] <= abs(params.k):
        return False
    lz_top = _log_z(params, xs[-1])
    lz_second = _log_z(params, xs[-2])

    def ge(lhs: float, rhs: float) -> bool:
        return lhs >= rhs + K0_SLACK * max(1.0, abs(lhs), abs(rhs))

    # z_n >= 10
    if not ge(lz_top, math.log(10.0)):
        return False
    # z_{n-1} > 2
    if not ge(lz_second, math.log(2.0)):
        return False
    # z_{n-1} >= (1/2) * z_n^(1/(n-1))
    if not ge(lz_second, lz_top / (n - 1) - math.log(2.0)):
        return False
    # the slowest-decaying condition: the normalized defect of the top entry
    u = math.exp(-lz_top / (n - 1))
    if 2.0 * u >= 1.0:
        return False
    val = (n - 1) * (math.log1p(-2.0 * u) - math.log(2.0)) / lz_top
    if not ge(val, -0.5):
        return False
    return True


def _condition25_threshold(n: int) -> float:
    """Smallest Z such that the slow K0 inequality holds for all z_n >= Z."""
    lo, hi = 10.0, 10.0
    def ok(z: float) -> bool:
        u = z ** (-1.0 / (n - 1))
        if 2.0 * u >= 1.0:
            return False
        return (n - 1) * (math.log1p(-2.0 * u) - math.log(2.0)) / math.log(z) >= -0.5
    while not ok(hi):
        hi *= 2.0
        if hi > 1e18:  # pragma: no cover - cannot happen for n >= 3
            raise InvariantViolationError("no threshold for the K0 inequality")
    while hi / lo > 1.0001:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@lru_cache(maxsize=None)
def _param_cache(n: int, a: int, k: int):
    return _ParamState(MHParams(n, a, k))


class _ParamState:
    """Per-(n,a,k) caches: analytic K0 radius and the finite violation set."""

    def __init__(self, params: MHParams):
        self.params = params
        self._bad_set = None
        self._x_radius = None

    @property
    def x_radius(self) -> int:
        """Entry bound below which every inside-K0 solution must live."""
        if self._x_radius is None:
            p = self.params
            n, a, k = p.n, p.a, p.k
            zs = [10.0, float(4 ** (n - 1)), _condition25_threshold(n)]
            kp = p.kprime
            if kp > 0:
                zs.append(math.sqrt(kp / (1.0 - 2.0 ** (1 - n))))
            if k != 0:
                zs.append((2.0 * math.exp(p.log_z_scale) * math.sqrt(abs(k))) ** (n - 1))
            z_thresh = 1.01 * max(zs)
            r = int(math.ceil(z_thresh * math.exp(-p.log_z_scale))) + 1
            for bad in self.bad_set:
                r = max(r, bad[-1] + 1)
            self._x_radius = r
        return self._x_radius

    @property
    def bad_set(self) -> frozenset:
        if self._bad_set is None:
            self._bad_set = frozenset(prop22_violations(self.params))
        return self._bad_set


def _isqrt_exact(m: int):
    """Integer sqrt if m is a perfect square, else None."""
    if m < 0:
        return None
    r = math.isqrt(m)
    return r if r * r == m else None


def _ordered_prefixes(n_slots: int, lo: int, product_cap: int):
    """Yield non-decreasing positive tuples of length n_slots with product <= cap."""
    if n_slots == 0:
        if product_cap >= 1:
            yield ()
        return
    v = lo
    while v ** n_slots <= product_cap:
        for rest in _ordered_prefixes(n_slots - 1, v, product_cap // v):
            yield (v,) + rest
        v += 1


def _last_two_solutions(params: MHParams, prefix: tuple, y_max: int):
    """All ordered completions (prefix, y, z) on the variety with y <= y_max.

    The last coordinate z is solved from the quadratic
    z^2 - (a*prod(prefix)*y) z + (S + y^2 - k) = 0, S = sum(prefix^2).
    """
    a, k = params.a, params.k
    pprod = 1
    for v in prefix:
        pprod *= v
    s = sum(v * v for v in prefix)
    lo = prefix[-1] if prefix else 1
    out = []
    for y in range(lo, y_max + 1):
        b = a * pprod * y
        c = s + y * y - k
        d = _isqrt_exact(b * b - 4 * c)
        if d is None:
            continue
        for z in ((b - d) // 2, (b + d) // 2):
            if z >= y and z * z - b * z + c == 0:
                out.append(prefix + (y, z))
    return sorted(set(out))


def _root_candidates(params: MHParams):
    """Ordered positive solutions where a reverse move at the max can fail
    to strictly shrink the maximum or to stay positive.

    The search region is finite and derived from the descent proofs: such a
    tuple needs prefix product P = a*x_1..x_{n-2} small, or all of
    x_1..x_{n-1} inside the ball sum(x_i^2) <= k, or x_{n-1} <= 2.
    """
    n, a, k = params.n, params.a, params.k
    cands = set()
    cap = max(1, (n + abs(k)) // a)
    for prefix in _ordered_prefixes(n - 2, 1, cap):
        pprod = a
        for v in prefix:
            pprod *= v
        s = sum(v * v for v in prefix)
        if pprod >= 3:
            y_max = math.isqrt(max(0, s - k) // (pprod - 2)) + 2
        elif pprod == 1:
            # discriminant of the last-coordinate quadratic: y^2 <= 4(k-s)/3
            y_max = math.isqrt(4 * max(0, k - s) // 3) + 2
        else:  # P == 2: only the degenerate family shapes; keep a small window
            y_max = math.isqrt(abs(k)) + 2
        y_max = max(y_max, 2, prefix[-1] if prefix else 1)
        cands.update(_last_two_solutions(params, prefix, y_max))
    # region sum_{i<n} x_i^2 <= k (reverse move can go non-positive)
    if k > 0:
        r = math.isqrt(k)
        for prefix in _ordered_prefixes(n - 2, 1, (r + 1) ** (n - 2)):
            s = sum(v * v for v in prefix)
            if s > k or (prefix and prefix[-1] > r):
                continue
            cands.update(_last_two_solutions(params, prefix, r))
    # region x_{n-1} <= 2 (moves at small non-max positions can fail there)
    for prefix in _ordered_prefixes(n - 2, 1, 2 ** (n - 2)):
        if prefix and prefix[-1] > 2:
            continue
        cands.update(_last_two_solutions(params, prefix, 2))
    return sorted(cands)


def prop22_violations(params: MHParams):
    """Unexceptional ordered solutions on which some descent guarantee fails.

    Checked conclusions, all exact: the maximum is unique; the reverse move at
    the maximum strictly shrinks it and stays positive; any move at a non-max
    position makes the moved coordinate the strict unique maximum and stays
    positive. Exceptional tuples are exempt.
    """
    out = []
    for x in _root_candidates(params):
        if is_exceptional(params, x):
            continue
        if _prop22_fails(params, x):
            out.append(x)
    return out


def _prop22_fails(params: MHParams, x: tuple) -> bool:
    n = params.n
    if x[-1] == x[-2]:
        return True
    back = apply_move(params, x, n - 1).entries
    if back[-1] <= 0 or max(back) >= x[-1]:
        return True
    for j in range(n - 1):
        moved = apply_move(params, x, j).entries
        if moved[j] <= 0:
            return True
        if any(moved[j] <= moved[i] for i in range(n) if i != j):
            return True
    return False


def outside_K0(params: MHParams, x) -> bool:
    """True iff the (ordered, positive) tuple lies outside the control box K0.

    Outside K0 every descent guarantee holds: unique maximum, strict shrink
    under the reverse move, positivity under all moves.
    """
    t = _entries(x)
    _check_len(params, t)
    t = tuple(sorted(t))
    if t[0] <= 0:
        return False
    if not _analytic_outside(params, t):
        return False
    return t not in _param_cache(params.n, params.a, params.k).bad_set


# ---------------------------------------------------------------------------
# exceptional solutions
# ---------------------------------------------------------------------------

def is_fundamental_exceptional(params: MHParams, x) -> bool:
    """Shape test for the degenerate linear-growth families.

    After ordering: for a=1 the shape (1,...,1,2,t,t+m) with m^2 = k-n-1;
    for a=2 the shape (1,...,1,t,t+m) with m^2 = k-n+2. Other `a` have none.
    """
    t = order_tuple(x).entries
    _check_len(params, t)
    if t[0] <= 0:
        return False
    n, a, k = params.n, params.a, params.k
    d = t[-1] - t[-2]
    if a == 1:
        return (
            all(v == 1 for v in t[: n - 3])
            and t[n - 3] == 2
            and d * d == k - n - 1
        )
    if a == 2:
        return all(v == 1 for v in t[: n - 2]) and d * d == k - n + 2
    return False


def _families_possible(params: MHParams) -> bool:
    n, a, k = params.n, params.a, params.k
    if a == 1:
        return k - n - 1 >= 0 and _isqrt_exact(k - n - 1) is not None
    if a == 2:
        return k - n + 2 >= 0 and _isqrt_exact(k - n + 2) is not None
    return False


def descend_to_root(params: MHParams, x) -> tuple:
    """Follow reverse moves at the maximum while they strictly shrink it.

    Terminates because the maximum is a strictly decreasing positive integer;
    the result is the base tuple of x's enumeration tree.
    """
    t = order_tuple(x).entries
    if eval_residual(params, t) != 0:
        raise InvalidInputError("descend_to_root requires a tuple on the variety")
    if t[0] <= 0:
        raise InvalidInputError("descend_to_root requires positive entries")
    while True:
        y = order_tuple(apply_move(params, t, params.n - 1)).entries
        if y[0] <= 0 or y[-1] >= t[-1]:
            return t
        t = y


def is_exceptional(params: MHParams, x) -> bool:
    """Whether x belongs to the orbit of a degenerate linear-growth family.

    Operational test: descend to the tree root, then search the root's
    neighborhood (all moves, bounded box) for a fundamental-shape tuple.
    A shape match anywhere in the orbit neighborhood marks the whole tree.
    """
    t = order_tuple(x).entries
    _check_len(params, t)
    if not _families_possible(params):
        return False
    if eval_residual(params, t) != 0:
        raise InvalidInputError("is_exceptional requires a tuple on the variety")
    if t[0] <= 0:
        raise InvalidInputError("is_exceptional requires positive entries")
    if is_fundamental_exceptional(params, t):
        return True
    root = descend_to_root(params, t)
    return _root_is_exceptional(params.n, params.a, params.k, root)


@lru_cache(maxsize=4096)
def _root_is_exceptional(n: int, a: int, k: int, root: tuple) -> bool:
    params = MHParams(n, a, k)
    cap = a * max(root) ** (n - 1) + max(root) + abs(k) + n
    seen = {root}
    frontier = [root]
    for _ in range(16):
        nxt = []
        for t in frontier:
            if is_fundamental_exceptional(params, t):
                return True
            for j in range(n):
                y = order_tuple(apply_move(params, t, j)).entries
                if y[0] >= 1 and y[-1] <= cap and y not in seen:
                    seen.add(y)
                    nxt.append(y)
        if not nxt:
            return False
        frontier = nxt
    return any(is_fundamental_exceptional(params, t) for t in frontier)


# ---------------------------------------------------------------------------
# descent
# ---------------------------------------------------------------------------

def descend(params: MHParams, x) -> DescentPath:
    """Reverse-move at the maximum until the tuple enters K0.

    Each recorded step is (move index in the ordered tuple, resulting ordered
    tuple). Strict shrink of the maximum is asserted at every step.
    """
    t = order_tuple(x).entries
    if eval_residual(params, t) != 0:
        raise InvalidInputError("descend requires a tuple on the variety")
    if t[0] <= 0:
        raise InvalidInputError("descend requires positive entries")
    if is_exceptional(params, t):
        raise InvalidInputError(
            "descend requires an unexceptional tuple; this one belongs to a "
            "degenerate linear-growth family"
        )
    path = DescentPath(start=t)
    while outside_K0(params, t):
        if t[-1] == t[-2]:
            raise InvariantViolationError(f"non-unique maximum outside K0: {t}")
        j = params.n - 1
        y = order_tuple(apply_move(params, t, j)).entries
        if y[0] <= 0 or y[-1] >= t[-1]:
            raise InvariantViolationError(
                f"reverse move failed to shrink the maximum outside K0: {t} -> {y}"
            )
        path.steps.append((j, y))
        t = y
    return path


# ---------------------------------------------------------------------------
# sign orbits
# ---------------------------------------------------------------------------

def sign_orbit_reduce(params: MHParams, x):
    """Canonical representative of x under even sign changes.

    Returns (MHTuple, classification) with classification one of
    "all-positive", "mixed" (odd negative count: the representative carries
    the sign on position 0), and "has-zero".
    """
    t = _entries(x)
    _check_len(params, t)
    if eval_residual(params, t) != 0:
        raise InvalidInputError("sign_orbit_reduce requires a tuple on the variety")
    if any(v == 0 for v in t):
        canon = tuple(abs(v) for v in t)
        return MHTuple(canon, ordered=all(canon[i] <= canon[i + 1] for i in range(len(canon) - 1))), "has-zero"
    negs = sum(1 for v in t if v < 0)
    canon = [abs(v) for v in t]
    if negs % 2 == 0:
        cls = "all-positive"
    else:
        canon[0] = -canon[0]
        cls = "mixed"
    canon = tuple(canon)
    return MHTuple(canon, ordered=all(canon[i] <= canon[i + 1] for i in range(len(canon) - 1))), cls
