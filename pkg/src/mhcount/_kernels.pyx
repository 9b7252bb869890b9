# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the kernels in ``_kernels_py``.

Same contracts: a signed box scan over the first n-1 coordinates with an
exact quadratic solve for the last one, and the per-s reweighting of the
discretized transfer operator.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp
from libc.math cimport sqrt as c_sqrt

cnp.import_array()

DEF B_LIMIT = 2_000_000_000


cdef inline long long _isqrt_ll(long long v) nogil:
    cdef long long r
    if v <= 0:
        return 0
    r = <long long> c_sqrt(<double> v)
    while (r + 1) * (r + 1) <= v:
        r += 1
    while r * r > v:
        r -= 1
    return r


def signed_box_count(int n, long long a, long long k, long long r_max):
    """Number of integer solutions of sum(x^2) = a*prod(x) + k in [-R, R]^n."""
    cdef long long side, total, i, rem, x, b, c, disc, root, hi, lo, count
    cdef long long guard
    cdef int d
    if n < 3 or r_max < 0:
        raise ValueError("need n >= 3 and R >= 0")
    guard = a
    for d in range(n - 1):
        guard *= max(<long long> 1, r_max)
        if guard > B_LIMIT:
            raise ValueError("box too large for the int64 scan")
    side = 2 * r_max + 1
    total = 1
    for d in range(n - 1):
        total *= side
    count = 0
    with nogil:
        for i in range(total):
            rem = i
            b = a
            c = -k
            for d in range(n - 1):
                x = rem % side - r_max
                rem = rem // side
                b *= x
                c += x * x
            disc = b * b - 4 * c
            if disc < 0:
                continue
            root = _isqrt_ll(disc)
            if root * root != disc:
                continue
            hi = (b + root) >> 1
            lo = (b - root) >> 1
            if -r_max <= hi <= r_max:
                count += 1
            if disc > 0 and -r_max <= lo <= r_max:
                count += 1
    return count


ctypedef fused real_t:
    float
    double


cdef void _wpd(real_t[:, :] w, double[::1] lb, double s, real_t[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, c, rows = w.shape[0], corners = w.shape[1]
    cdef real_t f
    for i in range(rows):
        f = <real_t> c_exp(-s * lb[i])
        for c in range(corners):
            out[i, c] = w[i, c] * f


def weighted_power_data(interp, logbase, double s):
    """Rows of operator data at exponent s: interp[i] * exp(-s * logbase[i]).

    One power evaluation per row, fused with the multiply; the strided
    row view is consumed in place and dtype follows the weights.
    """
    interp_arr = np.asarray(interp)
    logbase_arr = np.ascontiguousarray(logbase, dtype=np.float64)
    if interp_arr.ndim != 2 or logbase_arr.shape[0] != interp_arr.shape[0]:
        raise ValueError("need interp with shape (rows, corners) and logbase (rows,)")
    out_arr = np.empty((interp_arr.shape[0], interp_arr.shape[1]), dtype=interp_arr.dtype)
    if interp_arr.dtype == np.float32:
        _wpd[float](interp_arr, logbase_arr, s, out_arr)
    elif interp_arr.dtype == np.float64:
        _wpd[double](interp_arr, logbase_arr, s, out_arr)
    else:
        raise ValueError("weights must be float32 or float64")
    return out_arr
