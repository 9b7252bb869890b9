"""Discretized transfer operators on the ordered weight simplex.

The branch system is the accelerated family gamma_{n-1}^A gamma_j from
:mod:`mhcount.simplex`.  Points are stored in ratio coordinates
r_i = w_i / w_{i+1} (with w_{n-1} implied), which map the ordered simplex
onto the full cube [0,1]^{n-2}: every node of a tensor grid is a valid
point, and for n=3 the single ratio coordinate is exactly the classical
x = w_1/w_2 chart of the Gauss map.

The weighted branch sum

    (L_s f)(w) = sum_{j,A} (1 + (A+1)(1 - w_j))^{-s} f(gamma_{n-1}^A gamma_j . w)

is discretized by multilinear interpolation of f on the grid.  Branches
with A beyond a cutoff are folded into an analytic tail: the weight sum
collapses to a Hurwitz zeta value and f is read at the A -> infinity
limit point, which is exact for constants and accurate to the modulus of
continuity of f near the face w_1 = 0 otherwise.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import zeta as hurwitz_zeta

from . import kernels
from .core import InvalidInputError, InvariantViolationError
from .simplex import AccelGenerator, accel_act, jacobian_det, weight, _sample_delta

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
BISECT_LO = 1.1
BISECT_HI = 6.0

# Preset grids (nodes per ratio axis) and acceleration cutoffs by ambient n.
DEFAULT_GRID = {3: (512,), 4: (192, 192), 5: (48, 48, 48), 6: (24, 24, 24, 24)}
DEFAULT_A_MAX = {3: 512, 4: 128, 5: 48, 6: 24}
COARSE_GRID = {3: (257,), 4: (65, 65), 5: (17, 17, 17), 6: (9, 9, 9, 9)}

_F32_NNZ = 60_000_000        # stored entries switch to float32 above this
_STORE_BYTE_CAP = 3_000_000_000  # never materialize a matrix bigger than this
_F32_POWER_TOL = 1e-5        # float32 matvec noise floor for the eigen loop
_NODE_CAP = 2_000_000


class ConvergenceError(RuntimeError):
    """Power iteration ran out of steps; carries the last residual seen."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


# ---------------------------------------------------------------------------
# coordinate charts
# ---------------------------------------------------------------------------

def ratio_to_free(r):
    """Free weights (w_1..w_{n-2}) and the implied w_{n-1} from ratios.

    w_j = w_{n-1} * prod_{i>=j} r_i and the normalization
    w_{n-1} = 1 / (1 + sum_j prod_{i>=j} r_i).
    """
    r = np.asarray(r, dtype=float)
    suffix = np.cumprod(r[..., ::-1], axis=-1)[..., ::-1]
    w_last = 1.0 / (1.0 + suffix.sum(axis=-1))
    return suffix * w_last[..., None], w_last


def free_to_ratio(w):
    """Inverse chart: consecutive ratios w_i / w_{i+1} (0 where undefined)."""
    w = np.asarray(w, dtype=float)
    w_last = 1.0 - w.sum(axis=-1)
    upper = np.concatenate([w[..., 1:], w_last[..., None]], axis=-1)
    out = np.zeros_like(w)
    np.divide(w, upper, out=out, where=upper > 0)
    return out


def _branch_image(r, w, w_last, j, a):
    """Ratio-chart image of gamma_{n-1}^a gamma_j and the log branch weight.

    Dropping w_j shifts the ratio ladder: entries before j-1 are untouched,
    r_{j-1} and r_j merge into their product, later ratios slide down, and
    the new smallest ratio is w_{n-1} / (1 + a (1 - w_j)).  a=inf gives the
    tail limit point (last ratio 0).
    """
    m = r.shape[-1]
    c = 1.0 - w[..., j - 1]
    last = w_last / (1.0 + a * c)
    pieces = []
    if j >= 3:
        pieces.append(r[..., : j - 2])
    if j >= 2:
        pieces.append((r[..., j - 2] * r[..., j - 1])[..., None])
    if j <= m - 1:
        pieces.append(r[..., j:])
    pieces.append(last[..., None])
    return np.concatenate(pieces, axis=-1), np.log1p((a + 1.0) * c)


def _corner_data(grid, strides, img):
    """Multilinear stencil of points `img`: flat column indices and weights."""
    m = img.shape[-1]
    base, frac = [], []
    for ax in range(m):
        g = grid[ax]
        u = img[..., ax] * (g - 1)
        i0 = np.clip(np.floor(u), 0, g - 2).astype(np.int64)
        base.append(i0)
        frac.append(u - i0)
    npts = img.shape[0]
    cols = np.empty((npts, 1 << m), dtype=np.int32)
    coeff = np.empty((npts, 1 << m), dtype=np.float64)
    for mask in range(1 << m):
        col = np.zeros(npts, dtype=np.int64)
        wgt = np.ones(npts, dtype=np.float64)
        for ax in range(m):
            if (mask >> ax) & 1:
                col += (base[ax] + 1) * strides[ax]
                wgt = wgt * frac[ax]
            else:
                col += base[ax] * strides[ax]
                wgt = wgt * (1.0 - frac[ax])
        cols[:, mask] = col
        coeff[:, mask] = wgt
    return cols, coeff


# ---------------------------------------------------------------------------
# operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorConfig:
    """Grid/truncation description of one weighted branch-sum operator."""

    n: int
    s: float
    grid: object = None
    a_max: int = None
    tail_mode: str = "analytic-tail"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise InvalidInputError("need integer n >= 3")
        if not self.s > 1.0:
            raise InvalidInputError("the branch weight series diverges for s <= 1")


@dataclass
class SpectralResult:
    """Leading eigendata: lam is the eigenvalue, h the sup-normalized vector."""

    lam: float
    h: np.ndarray
    nu: object
    iterations: int
    residual: float
    config: dict
    pairing: float = None


@dataclass
class BetaResult:
    beta: float
    bracket: tuple
    trace: list
    note: str = ""
    config: dict = field(default_factory=dict)


def _power_iterate(apply_fn, size, tol, max_iter, v0=None, norm="sup"):
    """Positive power iteration; returns (lam, vector, iterations, residual)."""
    if v0 is None:
        v = np.ones(size)
    else:
        v = np.asarray(v0, dtype=float).copy()
        if v.shape != (size,) or not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InvalidInputError("starting vector must be nonnegative and finite")
    scale0 = v.max() if norm == "sup" else v.sum()
    if scale0 <= 0:
        raise InvalidInputError("starting vector must be nonzero")
    v /= scale0
    lam = lam_prev = None
    for it in range(1, max_iter + 1):
        g = np.asarray(apply_fn(v), dtype=float)
        if not np.all(np.isfinite(g)) or g.min() < -1e-30:
            raise InvariantViolationError("operator image must stay finite and nonnegative")
        if norm == "sup":
            lam = float(v @ g) / float(v @ v)
            scale = g.max()
        else:
            lam = float(g.sum())
            scale = lam
        if scale <= 0:
            raise InvariantViolationError("positivity lost during power iteration")
        v = g / scale
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            resid = np.asarray(apply_fn(v), dtype=float) - lam * v
            residual = float(np.abs(resid).max() / np.abs(v).max())
            return lam, v, it, residual
        lam_prev = lam
    resid = np.asarray(apply_fn(v), dtype=float) - lam * v
    residual = float(np.abs(resid).max() / np.abs(v).max())
    raise ConvergenceError(
        f"no eigenvalue convergence within {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
        iterations=max_iter,
    )


class TransferOperator:
    """Sparse multilinear discretization of the branch sum on a ratio grid.

    The sparsity pattern (interpolation stencils and log branch weights) is
    independent of s, so one assembly serves every exponent: per-s data is
    interp * weight^{-s}, plus a Hurwitz-zeta factor on the tail slots.
    Oversized problems fall back to streaming block evaluation instead of
    materializing the matrix.
    """

    def __init__(self, n, grid=None, a_max=None, tail_mode="analytic-tail", stream=None):
        if int(n) != n or n < 3:
            raise InvalidInputError("need integer n >= 3")
        n = int(n)
        if n not in DEFAULT_GRID:
            raise InvalidInputError(
                f"n={n}: a tensor grid in {n - 2} ratio coordinates exceeds the "
                "node budget at any useful resolution; n <= 6 is supported"
            )
        if grid is None:
            grid = DEFAULT_GRID[n]
        if isinstance(grid, (int, np.integer)):
            grid = (int(grid),) * (n - 2)
        grid = tuple(int(g) for g in grid)
        if len(grid) != n - 2 or any(g < 4 for g in grid):
            raise InvalidInputError(f"grid for n={n} needs {n - 2} axes with >= 4 nodes")
        if a_max is None:
            a_max = DEFAULT_A_MAX[n]
        a_max = int(a_max)
        if a_max < 1:
            raise InvalidInputError("need a_max >= 1")
        if tail_mode not in ("analytic-tail", "drop"):
            raise InvalidInputError(f"unknown tail_mode {tail_mode!r}")

        self.n = n
        self.grid = grid
        self.a_max = a_max
        self.tail_mode = tail_mode
        m = n - 2
        size = 1
        for g in grid:
            size *= g
        if size > _NODE_CAP:
            raise InvalidInputError(f"{size} grid nodes exceed the node budget {_NODE_CAP}")
        self.size = size
        self._corners = 1 << m
        self._strides = tuple(int(np.prod(grid[ax + 1:], dtype=np.int64)) for ax in range(m))
        axes = [np.linspace(0.0, 1.0, g) for g in grid]
        mesh = np.meshgrid(*axes, indexing="ij")
        self._r = np.stack([mm.reshape(-1) for mm in mesh], axis=-1)
        self._w, self._w_last = ratio_to_free(self._r)
        self._slots = m * (a_max + 1 + (1 if tail_mode == "analytic-tail" else 0))
        self.nnz = size * self._slots * self._corners
        self._dtype = np.float64 if self.nnz <= _F32_NNZ else np.float32
        itemsize = np.dtype(self._dtype).itemsize
        bytes_est = self.nnz * (4 + 2 * itemsize)
        if stream is None:
            stream = bytes_est > _STORE_BYTE_CAP
        self.streaming = bool(stream)
        self._coords = None
        if not self.streaming:
            self._assemble()

    # -- geometry ----------------------------------------------------------

    def node_coords(self):
        """All n-1 ascending weights per node, shape (size, n-1)."""
        if self._coords is None:
            self._coords = np.concatenate([self._w, self._w_last[:, None]], axis=1)
        return self._coords

    @property
    def ratios(self):
        return self._r

    def _blocks(self):
        """Yield (slot, cols, coeff, logweight, tail_q) for every branch."""
        slot = 0
        for j in range(1, self.n - 1):
            for a in range(self.a_max + 1):
                img, logw = _branch_image(self._r, self._w, self._w_last, j, a)
                cols, coeff = _corner_data(self.grid, self._strides, img)
                yield slot, cols, coeff, logw, None
                slot += 1
            if self.tail_mode == "analytic-tail":
                img, _ = _branch_image(self._r, self._w, self._w_last, j, math.inf)
                cols, coeff = _corner_data(self.grid, self._strides, img)
                c = 1.0 - self._w[:, j - 1]
                yield slot, cols, coeff, np.log(c), self.a_max + 2.0 + 1.0 / c
                slot += 1

    def _assemble(self):
        N, slots, corners = self.size, self._slots, self._corners
        self._indices = np.empty((N, slots, corners), dtype=np.int32)
        self._interp = np.empty((N, slots, corners), dtype=self._dtype)
        self._logbase = np.empty((N, slots), dtype=np.float64)
        self._tail_q = {}
        for slot, cols, coeff, logw, q in self._blocks():
            self._indices[:, slot, :] = cols
            self._interp[:, slot, :] = coeff
            self._logbase[:, slot] = logw
            if q is not None:
                self._tail_q[slot] = q
        row_nnz = slots * corners
        self._indptr = (np.arange(N + 1, dtype=np.int64) * row_nnz).astype(np.int32)

    def _fill_data(self, s):
        N, slots, corners = self.size, self._slots, self._corners
        data = np.empty((N, slots, corners), dtype=self._dtype)
        for slot in range(slots):
            block = kernels.weighted_power_data(
                self._interp[:, slot, :], self._logbase[:, slot], s
            )
            q = self._tail_q.get(slot)
            if q is not None:
                block = block * hurwitz_zeta(s, q)[:, None]
            data[:, slot, :] = block
        return data.reshape(-1)

    def matrix(self, s):
        """scipy CSR matrix of the operator at exponent s."""
        self._check_s(s)
        if self.streaming:
            raise InvalidInputError(
                "operator runs in streaming mode; no materialized matrix available"
            )
        return sparse.csr_matrix(
            (self._fill_data(s), self._indices.reshape(-1), self._indptr),
            shape=(self.size, self.size),
        )

    @staticmethod
    def _check_s(s):
        if not s > 1.0:
            raise InvalidInputError("the branch weight series diverges for s <= 1")

    # -- application -------------------------------------------------------

    def _apply_streaming(self, s, v, transpose=False):
        acc = np.zeros(self.size)
        for _, cols, coeff, logw, q in self._blocks():
            factor = np.exp(-s * logw)
            if q is not None:
                factor = factor * hurwitz_zeta(s, q)
            if transpose:
                contrib = (coeff * (factor * v)[:, None]).reshape(-1)
                acc += np.bincount(cols.reshape(-1), weights=contrib, minlength=self.size)
            else:
                acc += factor * (coeff * v[cols]).sum(axis=1)
        return acc

    def _forward(self, s):
        self._check_s(s)
        if self.streaming:
            return lambda v: self._apply_streaming(s, v)
        M = self.matrix(s)
        return lambda v: M @ (v if v.dtype == M.dtype else v.astype(M.dtype))

    def _backward(self, s):
        self._check_s(s)
        if self.streaming:
            return lambda v: self._apply_streaming(s, v, transpose=True)
        MT = self.matrix(s).T
        return lambda v: MT @ (v if v.dtype == MT.dtype else v.astype(MT.dtype))

    def apply(self, s, f):
        """Evaluate the operator on grid values or on a callable of weights."""
        vec = np.asarray(f(self.node_coords()) if callable(f) else f, dtype=float)
        if vec.shape != (self.size,):
            raise InvalidInputError(f"need {self.size} node values, got shape {vec.shape}")
        return np.asarray(self._forward(s)(vec), dtype=float)

    def _power_tol(self, tol):
        if self._dtype == np.float32 and not self.streaming:
            return max(tol, _F32_POWER_TOL)
        return tol

    def leading_eigen(self, s, tol=POWER_TOL, max_iter=POWER_MAX_ITER, v0=None):
        lam, h, it, residual = _power_iterate(
            self._forward(s), self.size, self._power_tol(tol), max_iter, v0, "sup"
        )
        return SpectralResult(
            lam=lam, h=h, nu=None, iterations=it, residual=residual,
            config=self.describe(s),
        )

    def eigenmeasure(self, s, tol=POWER_TOL, max_iter=POWER_MAX_ITER, v0=None):
        """Dual eigenvector, normalized to total mass one."""
        lam, nu, it, residual = _power_iterate(
            self._backward(s), self.size, self._power_tol(tol), max_iter, v0, "l1"
        )
        return nu, lam, it, residual

    def describe(self, s=None):
        out = {
            "n": self.n,
            "grid": list(self.grid),
            "a_max": self.a_max,
            "tail_mode": self.tail_mode,
            "nodes": self.size,
            "nnz": int(self.nnz),
            "dtype": np.dtype(self._dtype).name,
            "streaming": self.streaming,
        }
        if s is not None:
            out["s"] = float(s)
        return out

    def exact_branches(self, s):
        """Yield (image weights, per-node factor) per branch, with f read exactly.

        Unlike the matrix route there is no interpolation here: callers get
        the true image coordinates of every node, so test functions can be
        evaluated analytically (used by the conformality check).
        """
        self._check_s(s)
        for j in range(1, self.n - 1):
            for a in range(self.a_max + 1):
                img, logw = _branch_image(self._r, self._w, self._w_last, j, a)
                wi, wl = ratio_to_free(img)
                yield np.concatenate([wi, wl[:, None]], axis=1), np.exp(-s * logw)
            if self.tail_mode == "analytic-tail":
                img, _ = _branch_image(self._r, self._w, self._w_last, j, math.inf)
                wi, wl = ratio_to_free(img)
                c = 1.0 - self._w[:, j - 1]
                factor = c ** (-s) * hurwitz_zeta(s, self.a_max + 2.0 + 1.0 / c)
                yield np.concatenate([wi, wl[:, None]], axis=1), factor


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def build_operator(config):
    return TransferOperator(config.n, config.grid, config.a_max, config.tail_mode)


def apply_transfer(config, f, operator=None):
    op = operator if operator is not None else build_operator(config)
    return op.apply(config.s, f)


def leading_eigen(config, tol=POWER_TOL, max_iter=POWER_MAX_ITER, v0=None, operator=None):
    op = operator if operator is not None else build_operator(config)
    return op.leading_eigen(config.s, tol=tol, max_iter=max_iter, v0=v0)


def eigenmeasure(config, tol=POWER_TOL, max_iter=POWER_MAX_ITER, operator=None):
    op = operator if operator is not None else build_operator(config)
    nu, _, _, _ = op.eigenmeasure(config.s, tol=tol, max_iter=max_iter)
    return nu


def solve_beta(n, tol=1e-3, grid=None, a_max=None, operator=None,
               power_tol=POWER_TOL, lo=BISECT_LO, hi=BISECT_HI):
    """Bisect for the exponent where the leading eigenvalue crosses one.

    The eigenvalue is strictly decreasing in s, so lam(mid) >= 1 moves the
    lower endpoint.  Endpoints that fail to straddle 1 are widened first;
    if the eigenvalue sits below 1 all the way down to s = 1.01 the result
    reports beta=None (decay too fast for a root above 1) instead of failing.
    """
    if not 1.0 < lo < hi:
        raise InvalidInputError("need 1 < lo < hi")
    op = operator if operator is not None else TransferOperator(n, grid, a_max)
    trace = []

    def lam_at(s, v0=None):
        res = op.leading_eigen(s, tol=power_tol, v0=v0)
        trace.append((float(s), float(res.lam)))
        return res

    r_lo = lam_at(lo)
    widen = max(0.5, hi - lo)
    while r_lo.lam <= 1.0 and lo > 1.0100001:
        lo = max(1.01, lo - widen)
        widen *= 2.0
        r_lo = lam_at(lo, r_lo.h)
    if r_lo.lam <= 1.0:
        return BetaResult(
            beta=None, bracket=(lo, hi), trace=trace,
            note="leading eigenvalue stays below one down to s=1.01; "
                 "no growth-exponent root above 1",
            config=op.describe(),
        )
    r_hi = lam_at(hi, r_lo.h)
    while r_hi.lam >= 1.0:
        if hi >= 24.0:
            raise InvariantViolationError("leading eigenvalue fails to drop below one by s=24")
        hi = min(24.0, hi * 1.6)
        r_hi = lam_at(hi, r_hi.h)
    warm = r_lo.h
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        r_mid = lam_at(mid, warm)
        warm = r_mid.h
        if r_mid.lam >= 1.0:
            lo = mid
        else:
            hi = mid
    return BetaResult(
        beta=0.5 * (lo + hi), bracket=(lo, hi), trace=trace, config=op.describe()
    )


def _default_test_functions(n):
    fs = [
        ("one", lambda W: np.ones(W.shape[0])),
        ("w1", lambda W: W[:, 0]),
        ("w_last", lambda W: W[:, -1]),
        ("w1_sq", lambda W: W[:, 0] ** 2),
    ]
    if n > 3:
        fs.append(("w1_wmid", lambda W: W[:, 0] * W[:, n - 3]))
    return fs


def conformal_residual(beta, operator=None, n=None, nu=None,
                       test_functions=None, return_details=False):
    """Worst defect of the pushforward identity nu(f) = sum_gamma nu(w^{-beta} f o gamma).

    Test functions are evaluated exactly at branch images (no interpolation),
    so at the true exponent with the true eigenmeasure the residual decays
    with the grid; at a wrong exponent the identity fails outright.
    """
    if operator is None:
        if n is None:
            raise InvalidInputError("need an operator or n")
        operator = TransferOperator(n)
    TransferOperator._check_s(beta)
    if nu is None:
        nu = operator.eigenmeasure(beta)[0]
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (operator.size,):
        raise InvalidInputError("eigenmeasure length does not match the grid")
    total = nu.sum()
    if not total > 0:
        raise InvalidInputError("eigenmeasure must have positive mass")
    nu = nu / total
    fs = test_functions if test_functions is not None else _default_test_functions(operator.n)
    nodes = operator.node_coords()
    lhs = {name: float(nu @ fn(nodes)) for name, fn in fs}
    rhs = {name: 0.0 for name, _ in fs}
    for img_full, factor in operator.exact_branches(beta):
        scaled = nu * factor
        for name, fn in fs:
            rhs[name] += float(scaled @ fn(img_full))
    details = {name: abs(lhs[name] - rhs[name]) for name, _ in fs}
    worst = max(details.values())
    return (worst, details) if return_details else worst


def h_recursion_residual(beta, operator=None, n=None, h=None):
    """sup |L_beta h - h| / sup |h| on the grid (small only near the root)."""
    if operator is None:
        if n is None:
            raise InvalidInputError("need an operator or n")
        operator = TransferOperator(n)
    if h is None:
        h = operator.leading_eigen(beta).h
    h = np.asarray(h, dtype=float)
    image = operator.apply(beta, h)
    return float(np.abs(image - h).max() / np.abs(h).max())


def lambda_upper_bound_check(n, s, lam=None, operator=None):
    """Assert the leading eigenvalue sits under (n-2) 2^s zeta(s, 3).

    Every branch weight is at least 1 + (A+1)/2 = (A+3)/2, so the row sums
    (hence the positive leading eigenvalue) are at most
    (n-2) sum_A ((A+3)/2)^{-s}.
    """
    TransferOperator._check_s(s)
    bound = (n - 2) * 2.0 ** s * float(hurwitz_zeta(s, 3.0))
    if lam is None:
        op = operator if operator is not None else TransferOperator(
            n, grid=COARSE_GRID.get(n), a_max=min(DEFAULT_A_MAX.get(n, 64), 64)
        )
        lam = op.leading_eigen(s, tol=1e-8).lam
    lam = float(lam)
    if lam > bound * (1.0 + 1e-9):
        raise InvariantViolationError(
            f"leading eigenvalue {lam:.6f} exceeds its ceiling {bound:.6f} at s={s}"
        )
    return {"lam": lam, "bound": bound, "margin": bound - lam}


# ---------------------------------------------------------------------------
# Gauss cross-checks (n=3)
# ---------------------------------------------------------------------------

def gauss_apply(s, x, f, a_max=512, tail_mode="analytic-tail"):
    """Direct continued-fraction operator sum_A (x+A+1)^{-s} f(1/(x+A+1))."""
    TransferOperator._check_s(s)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for a in range(a_max + 1):
        out += (x + a + 1.0) ** (-s) * f(1.0 / (x + a + 1.0))
    if tail_mode == "analytic-tail":
        out += hurwitz_zeta(s, x + a_max + 2.0) * f(np.zeros_like(x))
    return out


def _gauss_via_simplex(s, x, fs, a_max):
    """Same operator routed through the simplex action and branch weights.

    Conjugating by (1+x)^s turns the weighted branch sum at n=3 into the
    classical operator; both routes must agree termwise to roundoff.
    """
    outs = [np.zeros_like(x) for _ in fs]
    for i, xi in enumerate(x):
        w = np.array([xi / (1.0 + xi)])
        accs = [0.0] * len(fs)
        for a in range(a_max + 1):
            g = AccelGenerator(a, 1)
            wt = weight(g, w)
            img = accel_act(g, w)
            xp = img.w[0] / img.last
            fac = wt ** (-s) * (1.0 + xp) ** s
            for t, f in enumerate(fs):
                accs[t] += fac * float(f(xp))
        pre = (1.0 + xi) ** (-s)
        for t in range(len(fs)):
            outs[t][i] = pre * accs[t]
    return outs


def gauss_conjugation_check(s=2.0, grid_points=64, a_max=512, test_functions=None):
    """Max pointwise gap between the direct and the conjugated branch sums."""
    x = np.linspace(0.0, 1.0, grid_points)
    fs = test_functions if test_functions is not None else [
        lambda t: np.ones_like(np.asarray(t, dtype=float)),
        lambda t: np.asarray(t, dtype=float),
        lambda t: np.asarray(t, dtype=float) ** 2,
        lambda t: 1.0 / (1.0 + np.asarray(t, dtype=float)),
    ]
    conj = _gauss_via_simplex(s, x, fs, a_max)
    worst = 0.0
    for f, routed in zip(fs, conj):
        direct = gauss_apply(s, x, f, a_max, tail_mode="drop")
        worst = max(worst, float(np.abs(direct - routed).max()))
    return worst


def gauss_leading_eigen(s=2.0, grid_points=512, a_max=512, tol=POWER_TOL,
                        max_iter=POWER_MAX_ITER):
    """Leading eigendata of the direct operator on a uniform grid of [0,1]."""
    TransferOperator._check_s(s)
    x = np.linspace(0.0, 1.0, grid_points)
    slots = a_max + 2
    cols = np.empty((grid_points, slots, 2), dtype=np.int32)
    coeff = np.empty((grid_points, slots, 2), dtype=np.float64)
    logbase = np.empty((grid_points, slots), dtype=np.float64)
    for a in range(a_max + 1):
        img = (1.0 / (x + a + 1.0))[:, None]
        cols[:, a, :], coeff[:, a, :] = _corner_data((grid_points,), (1,), img)
        logbase[:, a] = np.log(x + a + 1.0)
    cols[:, a_max + 1, :], coeff[:, a_max + 1, :] = _corner_data(
        (grid_points,), (1,), np.zeros((grid_points, 1))
    )
    logbase[:, a_max + 1] = 0.0
    data = coeff * np.exp(-s * logbase)[:, :, None]
    data[:, a_max + 1, :] *= hurwitz_zeta(s, x + a_max + 2.0)[:, None]
    indptr = np.arange(grid_points + 1, dtype=np.int32) * (slots * 2)
    M = sparse.csr_matrix(
        (data.reshape(-1), cols.reshape(-1), indptr), shape=(grid_points, grid_points)
    )
    lam, h, _, _ = _power_iterate(lambda v: M @ v, grid_points, tol, max_iter)
    return lam, h, x


# ---------------------------------------------------------------------------
# renewal cocycle spot check
# ---------------------------------------------------------------------------

def _renewal_count_stepwise(n, w, rem):
    """Words with stepwise log-weight total <= rem, counted recursively."""
    total = 1
    for j in range(1, n - 1):
        a = 0
        while True:
            tau = math.log(weight((a, j), w))
            if tau > rem:
                break
            total += _renewal_count_stepwise(n, np.asarray(accel_act((a, j), w).w), rem - tau)
            a += 1
    return total


def _renewal_count_jacobian(n, w0, budget, slack=0.05):
    """Same count, but each word is re-weighed via its Jacobian at the base point."""
    count = 0
    stack = [(np.asarray(w0, dtype=float), (), 0.0)]
    while stack:
        p, gword, acc = stack.pop()
        if gword:
            tau = -math.log(abs(jacobian_det(gword, w0))) / (n - 1)
        else:
            tau = 0.0
        if tau <= budget:
            count += 1
        for j in range(1, n - 1):
            a = 0
            while True:
                step = math.log(weight((a, j), p))
                if acc + step > budget + slack:
                    break
                child = (n - 1,) * a + (j,) + gword
                stack.append((np.asarray(accel_act((a, j), p).w), child, acc + step))
                a += 1
    return count


def renewal_spot_check(n, trials=20, budget=3.0, rng_seed=0):
    """Exact integer agreement of two word counts below a log-weight budget.

    One route subtracts stepwise weights along the orbit; the other prices
    each word in one shot through the Jacobian cocycle at the base point.
    Any inconsistency between the branch weights and the derivative chain
    rule shows up as a count mismatch.
    """
    if not 3 <= n <= 6:
        raise InvalidInputError("spot check supports 3 <= n <= 6")
    if budget > 3.0:
        raise InvalidInputError("budgets above 3 make the word tree explode")
    rng = np.random.default_rng(rng_seed)
    pts = _sample_delta(n, trials, rng)
    total_words = 0
    for t in range(trials):
        w0 = pts[t]
        a = float(rng.uniform(0.4, budget))
        stepwise = _renewal_count_stepwise(n, w0, a)
        one_shot = _renewal_count_jacobian(n, w0, a)
        if stepwise != one_shot:
            raise InvariantViolationError(
                f"renewal counts disagree at trial {t}: stepwise {stepwise} vs "
                f"jacobian {one_shot} (budget {a:.6f})"
            )
        total_words += stepwise
    return {"trials": trials, "total_words": total_words}
