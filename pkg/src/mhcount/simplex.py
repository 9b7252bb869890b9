"""Projectivized action on the limit simplex and its contraction audit.

Points live in the simplex of ordered nonnegative weights w_1 <= ... <= w_{n-1}
with sum 1 (last coordinate of the ambient vector normalized to 1); the free
coordinates are the first n-2.  Generators act by dropping one coordinate and
appending a new largest one, then renormalizing; accelerated generators fold
an arbitrary power of the last generator into a single closed-form map.  All
derivative matrices are exact rational expressions in w, so the audit checks
the contraction inequalities without finite differences.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, InvariantViolationError

DELTA_TOL = 1e-12
AUDIT_MARGIN = 1e-12
A_CAP = 64


def _free(w):
    if isinstance(w, SimplexPoint):
        return np.asarray(w.w, dtype=float)
    arr = np.asarray(w, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise InvalidInputError("simplex point needs at least one free coordinate")
    return arr


def _validate_free(arr):
    n = arr.size + 2
    if np.any(arr < -DELTA_TOL):
        raise InvalidInputError("negative simplex coordinate")
    if np.any(np.diff(arr) < -DELTA_TOL):
        raise InvalidInputError("simplex coordinates must be nondecreasing")
    last = 1.0 - arr.sum()
    if arr[-1] > last + DELTA_TOL:
        raise InvalidInputError("implied largest coordinate out of order")
    return n


@dataclass(frozen=True)
class SimplexPoint:
    """Free coordinates w_1..w_{n-2}; w_{n-1} = 1 - sum is implied."""

    w: tuple

    def __post_init__(self):
        arr = np.asarray(self.w, dtype=float)
        _validate_free(arr)
        object.__setattr__(self, "w", tuple(float(v) for v in arr))

    @property
    def n(self):
        return len(self.w) + 2

    @property
    def last(self):
        return 1.0 - sum(self.w)


@dataclass(frozen=True)
class AccelGenerator:
    """gamma_{n-1}^A gamma_j with A >= 0 and 1 <= j <= n-2."""

    A: int
    j: int

    def __post_init__(self):
        if self.A < 0 or self.j < 1:
            raise InvalidInputError("need A >= 0 and j >= 1")


@dataclass(frozen=True)
class HPoint:
    """Ordered nonnegative vector with the first n-1 entries summing to the last."""

    y: tuple

    def __post_init__(self):
        arr = np.asarray(self.y, dtype=float)
        if np.any(arr < -DELTA_TOL) or np.any(np.diff(arr) < -DELTA_TOL):
            raise InvalidInputError("hyperplane point must be nonnegative ordered")
        if abs(arr[:-1].sum() - arr[-1]) > 1e-9 * max(1.0, arr[-1]):
            raise InvalidInputError("first n-1 entries must sum to the last")
        object.__setattr__(self, "y", tuple(float(v) for v in arr))


def full_coords(w):
    """All n-1 weights of a point given by its free coordinates."""
    arr = _free(w)
    return np.append(arr, 1.0 - arr.sum())


def beta_sum(w):
    return float(_free(w).sum())


# ---------------------------------------------------------------------------
# actions
# ---------------------------------------------------------------------------

def gamma_act(j, y):
    """Drop y_j and append the sum of the others; stays on the hyperplane."""
    arr = np.asarray(y.y if isinstance(y, HPoint) else y, dtype=float)
    n = arr.size
    if not 1 <= j <= n - 1:
        raise InvalidInputError(f"generator index {j} out of range for n={n}")
    if np.any(arr < -DELTA_TOL) or np.any(np.diff(arr) < -DELTA_TOL):
        raise InvalidInputError("input must be nonnegative ordered")
    s = arr.sum() - arr[j - 1]
    out = np.append(np.delete(arr, j - 1), s)
    return HPoint(tuple(out))


def _accel(g):
    if isinstance(g, AccelGenerator):
        return g.A, g.j
    a, j = g
    return AccelGenerator(int(a), int(j)).A, j


def accel_act(g, w):
    """Accelerated generator on free coordinates, with exact renormalization."""
    arr = _free(w)
    n = _validate_free(arr)
    A, j = _accel(g)
    if j > n - 2:
        raise InvalidInputError(f"generator index {j} out of range for n={n}")
    den = (A + 2.0) - (A + 1.0) * arr[j - 1]
    new = np.append(np.delete(arr, j - 1), 1.0 - arr.sum()) / den
    return SimplexPoint(tuple(new))


def accel_act_full(g, w):
    """Like accel_act, also returning the implied largest weight of the image."""
    pt = accel_act(g, w)
    return pt, pt.last


def weight(g, w):
    """Expansion factor 1+(A+1)(1-w_j): the image's last ambient coordinate."""
    arr = _free(w)
    _validate_free(arr)
    A, j = _accel(g)
    return 1.0 + (A + 1.0) * (1.0 - arr[j - 1])


def classify_region(w):
    """core / cusp / boundary split of the half-simplex, by the gap at w_{n-2}."""
    arr = _free(w)
    _validate_free(arr)
    last = 1.0 - arr.sum()
    if last < 0.5 - DELTA_TOL:
        raise InvalidInputError("point is outside the half-simplex")
    m = (last - arr.sum()) - arr[-1]
    if m > DELTA_TOL:
        return "cusp"
    if m < -DELTA_TOL:
        return "core"
    return "boundary"


def in_delta0(w):
    arr = _free(w)
    return 1.0 - arr.sum() >= 0.5 - DELTA_TOL


# ---------------------------------------------------------------------------
# derivatives: every generator is affine-over-affine in the free coordinates
# ---------------------------------------------------------------------------

def _affine_data(n, letter, power=1):
    """(M, b, d, c) with map w -> (Mw+b)/(d.w+c) for gamma_letter (or its power)."""
    m = n - 2
    if letter == n - 1:
        return np.eye(m), np.zeros(m), float(power) * np.ones(m), 1.0
    if not 1 <= letter <= n - 2:
        raise InvalidInputError(f"generator index {letter} out of range for n={n}")
    if power != 1:
        raise InvalidInputError("powers are closed-form only for the last generator")
    i0 = letter - 1
    M = np.zeros((m, m))
    rows = [l for l in range(m) if l != i0]
    for r, l in enumerate(rows):
        M[r, l] = 1.0
    M[m - 1, :] = -1.0
    b = np.zeros(m)
    b[m - 1] = 1.0
    d = np.zeros(m)
    d[i0] = -1.0
    return M, b, d, 2.0


def _bp_apply(data, W):
    M, b, d, c = data
    den = W @ d + c
    return (W @ M.T + b) / den[:, None]


def _bd_apply(data, W):
    M, b, d, c = data
    den = W @ d + c
    num = W @ M.T + b
    return M[None, :, :] / den[:, None, None] - (
        num[:, :, None] * d[None, None, :]
    ) / (den**2)[:, None, None]


def _point_gamma(n, letter, w):
    return _bp_apply(_affine_data(n, letter), w[None])[0]


def total_derivative(word, w):
    """Jacobian of the composite gamma-word (rightmost letter applied first)."""
    arr = _free(w)
    n = _validate_free(arr)
    m = n - 2
    jac = np.eye(m)
    p = arr.copy()
    for letter in reversed(list(word)):
        jac = _bd_apply(_affine_data(n, int(letter)), p[None])[0] @ jac
        p = _point_gamma(n, int(letter), p)
    return jac


def jacobian_det(g_or_word, w):
    """|Jacobian| = (product of expansion weights)^-(n-1) along the orbit."""
    arr = _free(w)
    n = _validate_free(arr)
    if isinstance(g_or_word, AccelGenerator):
        return weight(g_or_word, arr) ** (-(n - 1))
    det = 1.0
    p = arr.copy()
    for letter in reversed(list(g_or_word)):
        letter = int(letter)
        _, _, d, c = _affine_data(n, letter)
        det *= (p @ d + c) ** (-(n - 1))
        p = _point_gamma(n, letter, p)
    return det


def accel_fixed_point(n, A, j=None, iterations=200):
    """Attracting fixed point of one accelerated generator."""
    if j is None:
        j = n - 2
    g = AccelGenerator(A, j)
    p = np.full(n - 2, 1.0 / (n - 1))
    for _ in range(iterations):
        p = np.asarray(accel_act(g, p).w)
    return SimplexPoint(tuple(p))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _sample_delta(n, count, rng):
    """Uniform points of the ordered simplex, as (count, n-2) free coordinates."""
    v = rng.exponential(size=(count, n - 1))
    v /= v.sum(axis=1, keepdims=True)
    v.sort(axis=1)
    return v[:, : n - 2]


def _sample_delta0(n, count, rng):
    out = []
    have = 0
    while have < count:
        w = _sample_delta(n, max(count, 4096), rng)
        keep = w[1.0 - w.sum(axis=1) >= 0.5]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:count]


# ---------------------------------------------------------------------------
# the contraction audit
# ---------------------------------------------------------------------------

def _word_norms(n, word, W):
    """Matrix 1-norms of the word's Jacobian at each row of W."""
    m = n - 2
    jac = np.broadcast_to(np.eye(m), (len(W), m, m)).copy()
    P = W
    for letter in reversed(word):
        data = _affine_data(n, letter)
        jac = _bd_apply(data, P) @ jac
        P = _bp_apply(data, P)
    return np.abs(jac).sum(axis=1).max(axis=1)


def _inequality_table(n):
    """The audited derivative bounds: (name, word, closed_form(W), ceilings).

    Ceilings are per region; a single 'delta0' entry applies to the whole
    half-simplex.  Closed forms take the (S, n-2) sample block and return a
    per-row bound that must dominate the matrix 1-norm.
    """
    m = n - 2
    fams = []

    def beta(W):
        return W.sum(axis=1)

    for i in range(1, n - 2):  # i <= n-3
        fams.append((
            f"d(g{i})",
            (i,),
            lambda W, i=i: 2.0 / (2.0 - W[:, i - 1]),
            {"cusp": 6 / 5, "core": 4 / 3},
        ))
    fams.append((
        f"d(g{n - 1})",
        (n - 1,),
        lambda W: (1.0 + 2.0 * beta(W) - 2.0 * W[:, 0]) / (1.0 + beta(W)) ** 2,
        {"delta0": 1.0},
    ))
    for i in range(1, n - 2):
        for j in range(i + 1, n - 1):
            fams.append((
                f"d(g{i}g{j})",
                (i, j),
                lambda W, i=i, j=j: 2.0 / (4.0 - 2.0 * W[:, j - 1] - W[:, i - 1]),
                {"delta0": 4 / 5},
            ))
    for i in range(1, n - 2):
        for j in range(1, i + 1):  # j <= i < n-2
            fams.append((
                f"d(g{i}g{j})",
                (i, j),
                lambda W, i=i, j=j: 2.0 / (4.0 - 2.0 * W[:, j - 1] - W[:, i]),
                {"delta0": 4 / 5},
            ))
    for j in range(1, n - 2):
        fams.append((
            f"d(g{n - 2}g{j})",
            (n - 2, j),
            lambda W, j=j: (4.0 + 2.0 * beta(W) - 2.0 * W[:, 0] - 3.0 * W[:, j - 1])
            / (3.0 + beta(W) - 2.0 * W[:, j - 1]) ** 2,
            {"delta0": 4 / 5},
        ))
    for i in range(1, n - 2):
        fams.append((
            f"d(g{n - 1}g{i})",
            (n - 1, i),
            lambda W, i=i: 2.0 / (3.0 - 2.0 * W[:, i - 1]),
            {"cusp": 10 / 13, "core": 4 / 5},
        ))
    fams.append((
        f"d(g{n - 1}g{n - 2})",
        (n - 1, n - 2),
        lambda W: 2.0 / (3.0 - 2.0 * W[:, m - 1]),
        {"cusp": 6 / 7, "core": 1.0},
    ))
    for i in range(1, n - 2):
        fams.append((
            f"d(g{i}g{n - 1}g{n - 2})",
            (i, n - 1, n - 2),
            lambda W, i=i: 2.0 / (6.0 - 4.0 * W[:, m - 1] - W[:, i - 1]),
            {"delta0": 4 / 7},
        ))
    fams.append((
        f"d(g{n - 2}g{n - 1}g{n - 2})",
        (n - 2, n - 1, n - 2),
        lambda W: (7.0 + 2.0 * beta(W) - 2.0 * W[:, 0] - 6.0 * W[:, m - 1])
        / (5.0 + beta(W) - 4.0 * W[:, m - 1]) ** 2,
        {"delta0": 32 / 49},
    ))
    fams.append((
        f"d(g{n - 1}g{n - 1}g{n - 2})",
        (n - 1, n - 1, n - 2),
        lambda W: 2.0 / (4.0 - 3.0 * W[:, m - 1]),
        {"cusp": 2 / 3, "core": 4 / 5},
    ))
    return fams


def _composite_norms(n, W, Ls, Ks, iis, jjs):
    """1-norms of d(g_{n-1}^L g_i g_{n-1}^K g_j) at W, all rows vectorized.

    Powers of the last generator collapse to the closed form w/(1+L*beta),
    so each row costs four matrix products regardless of L and K.
    """
    m = n - 2
    S = len(W)
    jac = np.broadcast_to(np.eye(m), (S, m, m)).copy()
    P = W.copy()

    def letter_stage(values):
        nonlocal jac, P
        newP = np.empty_like(P)
        for v in np.unique(values):
            mask = values == v
            data = _affine_data(n, int(v))
            jac[mask] = _bd_apply(data, P[mask]) @ jac[mask]
            newP[mask] = _bp_apply(data, P[mask])
        P = newP

    def power_stage(exps):
        nonlocal jac, P
        beta = P.sum(axis=1)
        den = 1.0 + exps * beta
        grad = np.eye(m)[None] / den[:, None, None] - (
            P[:, :, None] * exps[:, None, None]
        ) / (den**2)[:, None, None]
        jac = grad @ jac
        P = P / den[:, None]

    letter_stage(jjs)
    power_stage(Ks.astype(float))
    letter_stage(iis)
    power_stage(Ls.astype(float))
    return np.abs(jac).sum(axis=1).max(axis=1)


def contraction_audit(
    n,
    sample_count=100000,
    rng_seed=0,
    a_cap=A_CAP,
    composite_words=10000,
    points_per_word=2,
):
    """Check every listed derivative bound on random points of its region.

    Each sampled point must satisfy both the closed-form bound and the
    numeric ceiling, to within a 1e-12 margin; any violation raises with the
    witness point.  Returns the per-inequality maxima for reporting.
    """
    if n < 3:
        raise InvalidInputError("need n >= 3")
    rng = np.random.default_rng(rng_seed)
    pool = _sample_delta0(n, sample_count, rng)
    last = 1.0 - pool.sum(axis=1)
    gap = (last - pool.sum(axis=1)) - pool[:, -1]
    regions = {
        "delta0": pool,
        "cusp": pool[gap > 0],
        "core": pool[gap < 0],
    }
    report = {
        "n": n,
        "seed": rng_seed,
        "a_cap": a_cap,
        "inequalities": {},
        "prop51": {
            "two_norm_factor": math.sqrt(n - 2),
            "rho_per_letter": (24 / 25) ** 0.25,
        },
    }
    for name, word, closed_form, ceilings in _inequality_table(n):
        entry = {}
        for region, ceiling in ceilings.items():
            W = regions[region]
            if len(W) == 0:
                continue
            norms = _word_norms(n, word, W)
            cf = closed_form(W)
            bad = norms > cf + AUDIT_MARGIN
            if np.any(bad):
                witness = W[np.argmax(norms - cf)]
                raise InvariantViolationError(
                    f"{name} exceeds its closed form at {witness.tolist()}"
                )
            bad = norms > ceiling + AUDIT_MARGIN
            if np.any(bad):
                witness = W[np.argmax(norms)]
                raise InvariantViolationError(
                    f"{name} exceeds ceiling {ceiling} on {region} at {witness.tolist()}"
                )
            entry[region] = {
                "bound": ceiling,
                "max_observed": float(norms.max()),
                "samples": int(len(W)),
                "seed": rng_seed,
            }
        report["inequalities"][name] = entry

    # the 4-letter uniform-contraction bound
    S = composite_words * points_per_word
    W = _sample_delta0(n, S, rng)
    Ls = np.repeat(rng.integers(0, a_cap + 1, size=composite_words), points_per_word)
    Ks = np.repeat(rng.integers(0, a_cap + 1, size=composite_words), points_per_word)
    iis = np.repeat(rng.integers(1, n - 1, size=composite_words), points_per_word)
    jjs = np.repeat(rng.integers(1, n - 1, size=composite_words), points_per_word)
    norms = _composite_norms(n, W, Ls, Ks, iis, jjs)
    if np.any(norms > 24 / 25 + AUDIT_MARGIN):
        k = int(np.argmax(norms))
        raise InvariantViolationError(
            f"composite word (L={Ls[k]},i={iis[k]},K={Ks[k]},j={jjs[k]}) "
            f"norm {norms[k]:.6f} exceeds 24/25 at {W[k].tolist()}"
        )
    report["composite"] = {
        "bound": 24 / 25,
        "max_observed": float(norms.max()),
        "samples": int(S),
        "words": int(composite_words),
        "seed": rng_seed,
    }
    return report


# ---------------------------------------------------------------------------
# limit-set sampling
# ---------------------------------------------------------------------------

def barycenter(n):
    return SimplexPoint((1.0 / (n - 1),) * (n - 2))


def limit_set_sample(n, depth, count=1000, rng_seed=0, a_cap=A_CAP, exhaustive=False):
    """Images of the barycenter under words of accelerated generators.

    Random mode draws each letter's A from a capped geometric law so small
    accelerations dominate, as in the limit-set figures; exhaustive mode
    walks every word with A <= a_cap and ignores count.
    """
    if depth < 0:
        raise InvalidInputError("depth must be nonnegative")
    base = np.asarray(barycenter(n).w)
    if depth == 0:
        return [SimplexPoint(tuple(base))]
    out = []
    if exhaustive:
        letters = [(A, j) for A in range(a_cap + 1) for j in range(1, n - 1)]
        for word in itertools.product(letters, repeat=depth):
            p = base
            for A, j in word:
                p = np.asarray(accel_act((A, j), p).w)
            out.append(SimplexPoint(tuple(p)))
        return out
    rng = np.random.default_rng(rng_seed)
    for _ in range(count):
        p = base
        for _ in range(depth):
            A = min(int(rng.geometric(0.35)) - 1, a_cap)
            j = int(rng.integers(1, n - 1))
            p = np.asarray(accel_act((A, j), p).w)
        out.append(SimplexPoint(tuple(p)))
    return out
