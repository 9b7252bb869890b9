"""NumPy fallbacks for the compiled kernels in ``_kernels.pyx``.

Two hot loops live here: the signed box scan (count every integer solution
with all |x_i| <= R by solving the quadratic in the last coordinate) and the
per-s reweighting of the discretized transfer operator.  ``kernels`` picks
the Cython build when available and this module otherwise; both expose the
same functions and are cross-checked in the benchmark script.
"""

import numpy as np

# Keep b*b - 4*c comfortably inside int64: |b| <= a*R^(n-1) must stay below
# ~2.1e9 so the discriminant is < 2^63 with margin for the 4*c term.
_B_LIMIT = 2_000_000_000


def _exact_isqrt_i64(v):
    """Floor square root of a nonnegative int64 array, exact."""
    r = np.floor(np.sqrt(v.astype(np.float64))).astype(np.int64)
    # float sqrt can be off by one ulp near perfect squares; nudge both ways
    r = np.where((r + 1) * (r + 1) <= v, r + 1, r)
    r = np.where(r * r > v, r - 1, r)
    return r


def signed_box_count(n, a, k, r_max):
    """Number of integer solutions of sum(x^2) = a*prod(x) + k in [-R, R]^n.

    Scans all (2R+1)^(n-1) sign-and-value combinations of the first n-1
    coordinates in chunks and solves x_n^2 - b*x_n + c = 0 exactly.
    """
    if n < 3 or r_max < 0:
        raise ValueError("need n >= 3 and R >= 0")
    if a * (max(1, r_max) ** (n - 1)) > _B_LIMIT:
        raise ValueError("box too large for the int64 scan")
    side = 2 * r_max + 1
    vals = np.arange(-r_max, r_max + 1, dtype=np.int64)
    total = side ** (n - 1)
    count = 0
    chunk = 1 << 21
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        b = np.full(idx.shape, a, dtype=np.int64)
        c = np.full(idx.shape, -k, dtype=np.int64)
        rem = idx
        for _ in range(n - 1):
            rem, d = np.divmod(rem, side)
            x = vals[d]
            b *= x
            c += x * x
        disc = b * b - 4 * c
        ok = disc >= 0
        disc = np.where(ok, disc, 0)
        root = _exact_isqrt_i64(disc)
        perfect = ok & (root * root == disc)
        # b and root share parity whenever disc = b^2 - 4c is a square,
        # so the two candidate roots are always integers.
        hi = (b + root) >> 1
        lo = (b - root) >> 1
        count += int(np.sum(perfect & (np.abs(hi) <= r_max)))
        count += int(np.sum(perfect & (disc > 0) & (np.abs(lo) <= r_max)))
    return count


def weighted_power_data(interp, logbase, s):
    """Rows of operator data at exponent s: interp[i] * exp(-s * logbase[i]).

    The branch weight is constant along a row, so the power is evaluated
    once per row and broadcast over that row's interpolation weights;
    dtype follows the weights.
    """
    interp = np.asarray(interp)
    logbase = np.asarray(logbase, dtype=np.float64)
    if interp.ndim != 2 or logbase.shape != (interp.shape[0],):
        raise ValueError("need interp with shape (rows, corners) and logbase (rows,)")
    factor = np.exp(-s * logbase).astype(interp.dtype, copy=False)
    return interp * factor[:, None]
