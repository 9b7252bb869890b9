import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import mhcount.transfer as T
from mhcount.core import InvalidInputError, InvariantViolationError
from mhcount.simplex import accel_act, _sample_delta

BASEL_TOL = 5e-12
TAIL_TOL = 1e-12
CONJUGATION_TOL = 1e-10
GAUSS_LAM_TOL = 5e-4
PROFILE_TOL = 1e-3
GRID_DRIFT_TOL = 5e-4
RESID_SMALL = 1e-3
TWIN_TOL = 1e-12


# ---------------------------------------------------------------------------
# coordinate charts and branch geometry
# ---------------------------------------------------------------------------

@given(st.integers(3, 6), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_ratio_chart_roundtrip(n, seed):
    rng = np.random.default_rng(seed)
    w = _sample_delta(n, 5, rng)
    r = T.free_to_ratio(w)
    assert np.all(r >= 0) and np.all(r <= 1 + 1e-12)
    back, back_last = T.ratio_to_free(r)
    assert np.abs(back - w).max() < 1e-12
    assert np.abs(back_last - (1 - w.sum(axis=1))).max() < 1e-12


@given(st.integers(3, 6), st.integers(0, 10_000), st.integers(0, 40))
@settings(max_examples=60, deadline=None)
def test_branch_image_matches_simplex_action(n, seed, a):
    rng = np.random.default_rng(seed)
    m = n - 2
    r = rng.uniform(0.0, 1.0, size=(4, m))
    w, w_last = T.ratio_to_free(r)
    for j in range(1, n - 1):
        img, logw = T._branch_image(r, w, w_last, j, a)
        wi, _ = T.ratio_to_free(img)
        for t in range(4):
            ref = np.asarray(accel_act((a, j), w[t]).w)
            assert np.abs(wi[t] - ref).max() < 1e-12
            expected = math.log(1.0 + (a + 1.0) * (1.0 - w[t, j - 1]))
            assert abs(logw[t] - expected) < 1e-12


def test_tail_limit_point_has_zero_last_ratio():
    op = T.TransferOperator(4, grid=(8, 8), a_max=4)
    img, _ = T._branch_image(op._r, op._w, op._w_last, 1, math.inf)
    assert np.all(img[:, -1] == 0.0)
    assert np.all(img[:, :-1] >= 0)


# ---------------------------------------------------------------------------
# applying the operator
# ---------------------------------------------------------------------------

def test_apply_zero_and_positivity():
    op = T.TransferOperator(3, grid=64, a_max=32)
    out = op.apply(2.0, np.zeros(op.size))
    assert np.all(out == 0)
    out = op.apply(2.0, np.ones(op.size))
    assert np.all(out > 0)


def test_basel_value_at_corner():
    # at w_1 = 0 every branch weight is A+2, so the constant-function image
    # is sum_{A>=0} (A+2)^-2 = pi^2/6 - 1, with the zeta tail exact
    op = T.TransferOperator(3, grid=128, a_max=512)
    out = op.apply(2.0, np.ones(op.size))
    assert abs(out[0] - (math.pi**2 / 6 - 1)) < BASEL_TOL


def test_tail_is_exact_for_constants():
    a = T.TransferOperator(3, grid=64, a_max=128)
    b = T.TransferOperator(3, grid=64, a_max=512)
    ones = np.ones(a.size)
    assert np.abs(a.apply(2.0, ones) - b.apply(2.0, ones)).max() < TAIL_TOL
    dropped = T.TransferOperator(3, grid=64, a_max=128, tail_mode="drop")
    gap = np.abs(a.apply(2.0, ones) - dropped.apply(2.0, ones))
    assert gap.max() > 1e-4  # the tail carries real mass


def test_apply_callable_matches_vector():
    op = T.TransferOperator(4, grid=(12, 12), a_max=16)
    vec = op.node_coords()[:, 0] + 0.5
    out_v = op.apply(2.5, vec)
    out_c = op.apply(2.5, lambda W: W[:, 0] + 0.5)
    assert np.abs(out_v - out_c).max() == 0.0


def test_streaming_matches_stored():
    kw = dict(grid=(16, 16), a_max=24)
    stream = T.TransferOperator(4, stream=True, **kw)
    stored = T.TransferOperator(4, stream=False, **kw)
    assert stream.streaming and not stored.streaming
    with pytest.raises(InvalidInputError):
        stream.matrix(2.0)
    r1 = stream.leading_eigen(2.2)
    r2 = stored.leading_eigen(2.2)
    assert abs(r1.lam - r2.lam) < TWIN_TOL
    assert np.abs(r1.h - r2.h).max() < TWIN_TOL
    nu1 = stream.eigenmeasure(2.2)[0]
    nu2 = stored.eigenmeasure(2.2)[0]
    assert np.abs(nu1 - nu2).max() < TWIN_TOL


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def test_lambda_monotone_in_s():
    for n, grid, a_max in ((3, 128, 128), (4, (24, 24), 32)):
        op = T.TransferOperator(n, grid=grid, a_max=a_max)
        lams = [op.leading_eigen(s).lam for s in (1.5, 2.0, 2.5, 3.0, 3.5)]
        assert all(x > y for x, y in zip(lams, lams[1:]))
        assert all(x > 0 for x in lams)


def test_n3_eigen_profile():
    op = T.TransferOperator(3, grid=512, a_max=512)
    res = op.leading_eigen(2.0)
    assert abs(res.lam - 1.0) < GAUSS_LAM_TOL
    assert res.residual < 1e-8
    assert res.h.max() == 1.0
    profile = res.h / (1.0 + op.ratios[:, 0])
    assert (profile.max() - profile.min()) / profile.max() < PROFILE_TOL


def test_grid_convergence_n3():
    lam_a = T.TransferOperator(3, grid=128, a_max=256).leading_eigen(2.0).lam
    lam_b = T.TransferOperator(3, grid=256, a_max=256).leading_eigen(2.0).lam
    assert abs(lam_a - lam_b) < GRID_DRIFT_TOL


def test_eigenmeasure_normalized_positive():
    op = T.TransferOperator(3, grid=256, a_max=256)
    nu, lam_dual, _, resid = op.eigenmeasure(2.0)
    assert abs(nu.sum() - 1.0) < 1e-12
    assert nu.min() > 0
    assert resid < 1e-6
    lam = op.leading_eigen(2.0).lam
    assert abs(lam - lam_dual) < 1e-6
    # pairing against the eigenfunction is a positive number
    assert float(nu @ op.leading_eigen(2.0).h) > 0


def test_convergence_error_carries_residual():
    op = T.TransferOperator(3, grid=64, a_max=32)
    with pytest.raises(T.ConvergenceError) as err:
        op.leading_eigen(2.0, max_iter=2)
    assert err.value.iterations == 2
    assert err.value.residual > 0


def test_single_branch_measure_concentrates():
    # one branch x -> 1/(x+1) with weight one: the dual vector collapses to a
    # point mass at the golden-ratio fixed point
    g = 512
    x = np.linspace(0.0, 1.0, g)
    cols, coeff = T._corner_data((g,), (1,), (1.0 / (x + 1.0))[:, None])
    indptr = np.arange(g + 1, dtype=np.int32) * 2
    from scipy import sparse

    M = sparse.csr_matrix((coeff.reshape(-1), cols.reshape(-1), indptr), shape=(g, g))
    # column sums are one, so the dual eigenvalue is 1 from the first step;
    # iterate a fixed number of times to let the mass actually concentrate
    nu = np.full(g, 1.0 / g)
    for _ in range(500):
        nu = M.T @ nu
        nu /= nu.sum()
    fixed = (math.sqrt(5.0) - 1.0) / 2.0
    near = np.abs(x - fixed) < 0.02
    assert nu[near].sum() > 0.99


# ---------------------------------------------------------------------------
# exponent solving
# ---------------------------------------------------------------------------

def test_solve_beta_n3():
    res = T.solve_beta(3, tol=1e-4, grid=256, a_max=256)
    assert abs(res.beta - 2.0) < 1e-3
    assert res.bracket[0] <= res.beta <= res.bracket[1]
    assert res.note == ""
    ss = [s for s, _ in res.trace]
    assert len(ss) == len(set(ss)) and len(ss) >= 5


def test_solve_beta_widens_a_bad_bracket():
    op = T.TransferOperator(3, grid=128, a_max=128)
    res = T.solve_beta(3, operator=op, tol=1e-3, lo=3.0, hi=5.0)
    assert abs(res.beta - 2.0) < 5e-3


def test_solve_beta_reports_no_root_branch():
    class Decayed:
        size = 1

        def leading_eigen(self, s, tol=None, v0=None):
            return T.SpectralResult(
                lam=0.5, h=np.ones(1), nu=None, iterations=1, residual=0.0,
                config={"s": s},
            )

        def describe(self, s=None):
            return {}

    res = T.solve_beta(3, operator=Decayed(), tol=1e-3)
    assert res.beta is None
    assert "below one" in res.note


def test_solve_beta_input_validation():
    with pytest.raises(InvalidInputError):
        T.solve_beta(3, lo=0.9, hi=2.0)
    with pytest.raises(InvalidInputError):
        T.solve_beta(3, lo=2.0, hi=2.0)
    with pytest.raises(InvalidInputError):
        T.solve_beta(7)


# ---------------------------------------------------------------------------
# conformality and recursion residuals
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def solved_n3():
    op = T.TransferOperator(3, grid=256, a_max=256)
    res = T.solve_beta(3, tol=1e-4, operator=op)
    nu = op.eigenmeasure(res.beta)[0]
    return op, res.beta, nu


def test_conformal_residual_small_at_root(solved_n3):
    op, beta, nu = solved_n3
    worst, details = T.conformal_residual(beta, operator=op, nu=nu, return_details=True)
    assert worst < RESID_SMALL
    assert set(details) == {"one", "w1", "w_last", "w1_sq"}


def test_conformal_residual_inflates_off_root(solved_n3):
    op, beta, nu = solved_n3
    at_root = T.conformal_residual(beta, operator=op, nu=nu)
    for wrong in (beta + 0.1, beta - 0.1):
        assert T.conformal_residual(wrong, operator=op) > 10 * at_root


def test_h_recursion_residual_small(solved_n3):
    op, beta, _ = solved_n3
    assert T.h_recursion_residual(beta, operator=op) < RESID_SMALL


# ---------------------------------------------------------------------------
# Gauss cross-checks
# ---------------------------------------------------------------------------

def test_gauss_conjugation():
    assert T.gauss_conjugation_check(2.0, grid_points=64, a_max=512) < CONJUGATION_TOL


def test_gauss_direct_eigenvalue():
    lam, h, x = T.gauss_leading_eigen(2.0, grid_points=512, a_max=512)
    assert abs(lam - 1.0) < GAUSS_LAM_TOL
    assert h.max() == 1.0
    # the direct operator's eigenfunction is the classical density 1/(1+x)
    profile = h * (1.0 + x)
    assert (profile.max() - profile.min()) / profile.max() < PROFILE_TOL


def test_gauss_apply_basel_point():
    # at x=0 the direct branch weights are (A+1)^-2, summing to pi^2/6
    out = T.gauss_apply(2.0, np.array([0.0]), lambda t: np.ones_like(t), a_max=256)
    assert abs(out[0] - math.pi**2 / 6) < BASEL_TOL


# ---------------------------------------------------------------------------
# eigenvalue ceiling and renewal counts
# ---------------------------------------------------------------------------

def test_lambda_upper_bound_holds():
    report = T.lambda_upper_bound_check(3, 2.0)
    expected = 2.0**2 * (math.pi**2 / 6 - 1.0 - 0.25)
    assert abs(report["bound"] - expected) < 1e-12
    assert report["margin"] > 0
    report4 = T.lambda_upper_bound_check(4, 2.0)
    assert report4["margin"] > 0


def test_lambda_upper_bound_violation_raises():
    with pytest.raises(InvariantViolationError):
        T.lambda_upper_bound_check(3, 2.0, lam=5.0)


def test_renewal_spot_check_counts_agree():
    out = T.renewal_spot_check(3, trials=10, budget=2.5, rng_seed=7)
    assert out["trials"] == 10
    assert out["total_words"] > 10  # nontrivial trees were actually walked
    out4 = T.renewal_spot_check(4, trials=6, budget=2.0, rng_seed=3)
    assert out4["total_words"] > 6


def test_renewal_budget_guard():
    with pytest.raises(InvalidInputError):
        T.renewal_spot_check(3, budget=5.0)


# ---------------------------------------------------------------------------
# config plumbing and input validation
# ---------------------------------------------------------------------------

def test_operator_config_wrappers():
    cfg = T.OperatorConfig(n=3, s=2.0, grid=64, a_max=32)
    op = T.build_operator(cfg)
    out = T.apply_transfer(cfg, np.ones(op.size), operator=op)
    assert out.shape == (op.size,)
    res = T.leading_eigen(cfg, operator=op)
    assert res.config["s"] == 2.0 and res.config["grid"] == [64]
    nu = T.eigenmeasure(cfg, operator=op)
    assert abs(nu.sum() - 1.0) < 1e-12


def test_operator_config_validation():
    with pytest.raises(InvalidInputError):
        T.OperatorConfig(n=2, s=2.0)
    with pytest.raises(InvalidInputError):
        T.OperatorConfig(n=3, s=1.0)


def test_operator_input_validation():
    with pytest.raises(InvalidInputError):
        T.TransferOperator(7)
    with pytest.raises(InvalidInputError):
        T.TransferOperator(3, grid=(16, 16))
    with pytest.raises(InvalidInputError):
        T.TransferOperator(3, grid=2)
    with pytest.raises(InvalidInputError):
        T.TransferOperator(3, a_max=0)
    with pytest.raises(InvalidInputError):
        T.TransferOperator(3, tail_mode="truncate")
    op = T.TransferOperator(3, grid=32, a_max=8)
    with pytest.raises(InvalidInputError):
        op.apply(1.0, np.ones(op.size))
    with pytest.raises(InvalidInputError):
        op.apply(2.0, np.ones(op.size - 1))
