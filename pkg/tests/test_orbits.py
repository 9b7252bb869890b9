"""Orbit enumeration, ball counts, and the log-space deep walk.

Expected values here are frozen from independent derivations: the R=100
Markoff list against a brute-force box scan, signed ball counts against the
compiled box kernel (and its NumPy twin), and the log-space walk against
exact big-integer arithmetic on the same move words.
"""

import math
from itertools import islice

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhcount import _kernels_py, kernels
from mhcount.core import (
    InvalidInputError,
    MHTuple,
    InvariantViolationError,
    MHParams,
    _entries,
    eval_residual,
    is_exceptional,
    log_int,
)
from mhcount.orbits import (
    CountSeries,
    LogRegimeRefusal,
    OrbitNode,
    _advance_logs,
    _minus_solutions,
    _zero_coordinate_count,
    box_oracle,
    count_integer_ball,
    count_series,
    enumerate_ball,
    find_roots,
    fit_growth_exponent,
    forward_moves,
    log_node_from_exact,
    log_space_advance,
    ordered_multiplicity,
)

M330 = MHParams(3, 3, 0)
M440 = MHParams(4, 4, 0)
M314 = MHParams(3, 1, 4)

LOG_WALK_TOL = 1e-9

# Markoff triples with max entry <= 100, breadth-first, children in tuple order
MARKOFF_100 = [
    (1, 1, 1),
    (1, 1, 2),
    (1, 2, 5),
    (1, 5, 13),
    (2, 5, 29),
    (1, 13, 34),
    (1, 34, 89),
]

ORACLE_MATRIX = [
    (MHParams(3, 3, 0), 30),
    (MHParams(3, 1, 6), 30),
    (MHParams(4, 4, 0), 12),
    (MHParams(4, 1, 7), 12),
    (MHParams(4, 2, 3), 12),
]


def _exact_move(a, t, j):
    prod = a
    for v in t:
        prod *= v
    v = prod // t[j] - t[j]
    assert v > t[-1]
    return t[:j] + t[j + 1 :] + (v,)


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------

def test_markoff_ball_order():
    nodes = list(enumerate_ball(M330, [(1, 1, 1)], 100))
    assert [_entries(nd.tuple) for nd in nodes] == MARKOFF_100
    assert [nd.depth for nd in nodes] == [0, 1, 2, 3, 3, 4, 5]
    # replaying each move word from the root recovers the tuple
    for nd in nodes:
        t = (1, 1, 1)
        for step in nd.word:
            t = _exact_move(3, t, step - 1)
        assert t == _entries(nd.tuple)


def test_markoff_ball_matches_box_oracle():
    got = {_entries(nd.tuple) for nd in enumerate_ball(M330, [(1, 1, 1)], 100)}
    assert got == {_entries(t) for t in box_oracle(M330, 100)}
    assert len(got) == 7


def test_enumerate_rejects_bad_root():
    with pytest.raises(InvalidInputError):
        list(enumerate_ball(M330, [(1, 1, 3)], 10))


# ---------------------------------------------------------------------------
# roots
# ---------------------------------------------------------------------------

def test_find_roots_frozen_small():
    assert [_entries(t) for t in find_roots(M330).unexceptional] == [(1, 1, 1)]
    assert find_roots(M330).exceptional == ()
    assert [_entries(t) for t in find_roots(M440).unexceptional] == [(1, 1, 1, 1)]
    assert [_entries(t) for t in find_roots(MHParams(3, 1, 0)).unexceptional] == [(3, 3, 3)]


def test_find_roots_empty_with_note():
    rs = find_roots(MHParams(3, 1, 1))
    assert rs.unexceptional == ()
    assert "possibly empty" in rs.note


def test_find_roots_family_ladder():
    rs = find_roots(M314, bound=20)
    assert [_entries(t) for t in rs.unexceptional] == [(1, 1, 2)]
    assert [_entries(t) for t in rs.exceptional] == [(2, t, t) for t in range(2, 21)]
    for t in rs.exceptional:
        assert is_exceptional(M314, t)


def test_roots_are_minimal_in_box():
    # every box solution descends into the found root set
    for params, r in ORACLE_MATRIX:
        rs = find_roots(params, bound=max(r, 200))
        roots = {_entries(t) for t in rs.unexceptional} | {
            _entries(t) for t in rs.exceptional
        }
        reached = {
            _entries(nd.tuple)
            for nd in enumerate_ball(
                params,
                sorted(rt for rt in roots if rt[-1] <= r),
                r,
            )
        }
        assert reached == {_entries(t) for t in box_oracle(params, r)}


# ---------------------------------------------------------------------------
# moves
# ---------------------------------------------------------------------------

def test_forward_moves_markoff():
    kids = forward_moves(M330, (1, 2, 5))
    assert [_entries(nd.tuple) for nd in kids] == [(1, 5, 13), (2, 5, 29)]
    assert [nd.word for nd in kids] == [(2,), (1,)]
    only = forward_moves(M330, (1, 1, 2))
    assert [_entries(nd.tuple) for nd in only] == [(1, 2, 5)]


def test_forward_moves_quadruples():
    kids = forward_moves(M440, (1, 1, 1, 1))
    assert [_entries(nd.tuple) for nd in kids] == [(1, 1, 1, 3)]
    kids = forward_moves(MHParams(4, 2, 3), (1, 1, 1, 2))
    assert [_entries(nd.tuple) for nd in kids] == [(1, 1, 2, 3)]


def test_forward_moves_rejects_off_variety():
    with pytest.raises(InvalidInputError):
        forward_moves(M440, (1, 1, 1, 2))
    with pytest.raises(InvalidInputError):
        forward_moves(M330, (2, 1, 5))


def test_forward_moves_depth_and_dedup():
    node = forward_moves(M330, (1, 1, 2))[0]
    assert node.depth == 1
    grand = forward_moves(M330, node)
    assert all(g.depth == 2 for g in grand)
    assert all(g.word[: len(node.word)] == node.word for g in grand)


# ---------------------------------------------------------------------------
# integer ball counts against the signed box kernels
# ---------------------------------------------------------------------------

def test_signed_count_small_frozen():
    assert kernels.signed_box_count(3, 3, 0, 2) == 17
    assert count_integer_ball(M330, 2) == 17


def test_backend_twins_agree():
    for params, r in ORACLE_MATRIX:
        a = kernels.signed_box_count(params.n, params.a, params.k, r)
        b = _kernels_py.signed_box_count(params.n, params.a, params.k, r)
        assert a == b


def test_count_integer_ball_matches_kernel():
    for params, r in ORACLE_MATRIX:
        want = kernels.signed_box_count(params.n, params.a, params.k, r)
        got = count_integer_ball(params, r, include_exceptional=True)
        assert got == want, (params, r, got, want)


def test_zero_and_minus_parts_frozen():
    assert _zero_coordinate_count(M330, 10) == 1
    assert _zero_coordinate_count(MHParams(3, 1, 6), 10) == 0
    assert _zero_coordinate_count(MHParams(4, 1, 7), 10) == 0
    assert _zero_coordinate_count(MHParams(4, 2, 3), 10) == 32
    assert _zero_coordinate_count(M440, 10) == 1
    for params, r in ORACLE_MATRIX:
        assert _minus_solutions(params, r) == []
    # x^2+y^2+z^2+xyz = 4 has the positive point (1,1,1)
    assert _minus_solutions(M314, 10) == [(1, 1, 1)]


def test_count_integer_ball_with_families():
    # (3,1,4) carries the (2,t,t) ladder; counts must still match the box
    for r in (5, 10, 17):
        want = kernels.signed_box_count(3, 1, 4, r)
        assert count_integer_ball(M314, r, include_exceptional=True) == want


def test_multiplicity():
    assert ordered_multiplicity(3, (1, 1, 1)) == 1
    assert ordered_multiplicity(3, (1, 1, 2)) == 3
    assert ordered_multiplicity(3, (1, 2, 5)) == 6
    assert ordered_multiplicity(4, (1, 1, 2, 3)) == 12


# ---------------------------------------------------------------------------
# log-space walk
# ---------------------------------------------------------------------------

def _walk_to_switch(params, t, j=0):
    while log_int(params.a * math.prod(t[: params.n - 2])) < 30.5:
        t = _exact_move(params.a, t, j)
    return t


def test_log_walk_tracks_exact():
    t = _walk_to_switch(M330, (1, 2, 5))
    node = log_node_from_exact(M330, OrbitNode(tuple=MHTuple(t, ordered=True)))
    word = [0, 1, 0, 0, 1, 1, 0, 1, 0, 0]
    for j in word:
        t = _exact_move(3, t, j)
        node = log_space_advance(M330, node, j)
        for lv, ev, x in zip(node.log_repr, node.log_errs, t):
            assert abs(lv - log_int(x)) <= ev + 1e-12
        assert node.error_bound < LOG_WALK_TOL


def test_log_walk_quadruples():
    t = _walk_to_switch(M440, (1, 1, 1, 3), j=0)
    # need distinct entries before converting
    while len(set(t)) < len(t):
        t = _exact_move(4, t, 0)
    node = log_node_from_exact(M440, OrbitNode(tuple=MHTuple(t, ordered=True)))
    for j in [0, 2, 1, 0, 2, 2, 1]:
        t = _exact_move(4, t, j)
        node = log_space_advance(M440, node, j)
    for lv, ev, x in zip(node.log_repr, node.log_errs, t):
        assert abs(lv - log_int(x)) <= ev + 1e-12


def test_log_refusals():
    with pytest.raises(LogRegimeRefusal):
        log_node_from_exact(M330, OrbitNode(tuple=MHTuple((1, 2, 5), ordered=True)))
    t = _walk_to_switch(M330, (1, 2, 5))
    node = log_node_from_exact(M330, OrbitNode(tuple=MHTuple(t, ordered=True)))
    with pytest.raises(InvalidInputError):
        log_space_advance(M330, node, 2)  # backtracking move
    with pytest.raises(LogRegimeRefusal):
        _advance_logs(M330, (1.0, 2.0, 3.0), (0.0, 0.0, 0.0), 0)


def test_node_shape_validation():
    with pytest.raises(InvalidInputError):
        OrbitNode()
    with pytest.raises(InvalidInputError):
        log_node_from_exact(M330, OrbitNode(tuple=MHTuple((2, 2, 2), ordered=True)))


@given(st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=12))
@settings(max_examples=40, deadline=None)
def test_log_error_growth_is_controlled(word):
    t = _walk_to_switch(M330, (1, 2, 5))
    logs, errs = tuple(log_int(v) for v in t), (1e-14, 1e-14, 1e-14)
    for j in word:
        la = math.log(3) + logs[0] - errs[0]
        new_logs, new_errs = _advance_logs(M330, logs, errs, j)
        fresh = new_errs[-1] - sum(e for i, e in enumerate(errs) if i != j)
        # one linearization term bounded by 2/alpha plus roundoff at the
        # magnitude of the fresh log coordinate
        assert 0.0 <= fresh <= 8.0 * math.exp(-la) + 1e-15 * abs(new_logs[-1]) + 1e-15
        assert max(new_errs) >= max(errs) - 1e-18
        logs, errs = new_logs, new_errs


def test_doubling_along_accelerated_moves():
    # repeated moves at the second-largest slot at least double the max
    t = (1, 2, 5)
    for _ in range(8):
        prev = t[-1]
        t = _exact_move(3, t, 1)
        assert t[-1] >= 2 * prev
    t4 = (1, 1, 1, 3)
    for _ in range(6):
        prev = t4[-1]
        t4 = _exact_move(4, t4, 2)
        assert t4[-1] >= 2 * prev


# ---------------------------------------------------------------------------
# deep count series
# ---------------------------------------------------------------------------

def test_count_series_small_exact():
    grid = [math.log(1.5), math.log(2.5), math.log(6.0), math.log(100.5)]
    series = count_series(M330, grid)
    assert series.rows == [
        (grid[0], 1, True),
        (grid[1], 4, True),
        (grid[2], 10, True),
        (grid[3], 34, True),
    ]


def test_count_series_matches_box_multiplicities():
    grid = [math.log(30.0) + 1e-9]
    series = count_series(M330, grid)
    want = sum(ordered_multiplicity(3, _entries(t)) for t in box_oracle(M330, 30))
    assert series.rows[0][1] == want


def test_count_series_hybrid_consistency():
    grid = [10.0, 18.0, 26.0, 34.0, 42.0]
    pure = count_series(M330, grid, switch_at=1e9)
    hybrid = count_series(M330, grid, switch_at=10.0)
    assert all(flag for _, _, flag in pure.rows)
    assert sum(1 for _, _, flag in hybrid.rows if flag) >= 3
    for (g1, c1, f1), (g2, c2, f2) in zip(pure.rows, hybrid.rows):
        assert g1 == g2
        if f2:
            assert c1 == c2


def test_count_series_shard_roundtrip(tmp_path):
    shard = str(tmp_path / "markoff.csv")
    grid = [3.0, 6.0, 9.0]
    first = count_series(M330, grid, shard_path=shard, checkpoint_every=2)
    with open(shard) as fh:
        assert fh.read().splitlines()[-1] == "#complete"
    again = count_series(M330, grid, shard_path=shard)
    assert again.rows == first.rows
    assert again.meta.get("resumed")


def test_count_series_partial_resume(tmp_path):
    from mhcount.orbits import _dump_checkpoint, _series_header

    shard = str(tmp_path / "partial.csv")
    grid = [3.0, 6.0, 9.0]
    header = _series_header(M330, grid, 30.0)
    _dump_checkpoint(
        shard, header, [0, 0, 0], [True, True, True],
        [("x", (1, 1, 1))], done=False,
    )
    resumed = count_series(M330, grid, shard_path=shard)
    fresh = count_series(M330, grid)
    assert resumed.rows == fresh.rows


def test_count_series_rejects_bad_grid():
    with pytest.raises(InvalidInputError):
        count_series(M330, [])
    with pytest.raises(InvalidInputError):
        count_series(M330, [2.0, 2.0])


# ---------------------------------------------------------------------------
# growth-exponent fit
# ---------------------------------------------------------------------------

def test_fit_recovers_exact_power_law():
    rows = [(g, 7.0 * g * g, True) for g in [2.0, 3.0, 5.0, 8.0, 13.0, 21.0]]
    beta, c, rms = fit_growth_exponent(rows)
    assert abs(beta - 2.0) <= 1e-12
    assert abs(c - 7.0) <= 1e-9
    assert rms <= 1e-12


def test_fit_on_markoff_series():
    grid = [float(g) for g in range(8, 41, 4)]
    series = count_series(M330, grid)
    beta, _, _ = fit_growth_exponent(series)
    assert 1.5 <= beta <= 2.5


def test_fit_degenerate_inputs():
    with pytest.raises(InvalidInputError):
        fit_growth_exponent([(2.0, 10, True), (3.0, 20, True)])
    with pytest.raises(InvalidInputError):
        fit_growth_exponent([(0.5, 10, True), (0.9, 20, True), (0.99, 30, True)])


# ---------------------------------------------------------------------------
# structural properties
# ---------------------------------------------------------------------------

PROP_PARAMS = [M330, MHParams(3, 1, 0), M440, MHParams(4, 2, 3), M314]


@given(st.integers(min_value=0, max_value=4))
@settings(max_examples=10, deadline=None)
def test_enumeration_is_free_and_on_variety(idx):
    params = PROP_PARAMS[idx]
    rs = find_roots(params, bound=50)
    base = list(rs.unexceptional) + [t for t in rs.exceptional if _entries(t)[-1] <= 10]
    if not base:
        return
    nodes = list(islice(enumerate_ball(params, base, 10**15), 250))
    seen = set()
    for nd in nodes:
        t = _entries(nd.tuple)
        assert eval_residual(params, t) == 0
        assert all(t[i] <= t[i + 1] for i in range(len(t) - 1))
        assert t not in seen
        seen.add(t)


@given(st.integers(min_value=0, max_value=4), st.integers(min_value=0, max_value=10**6))
@settings(max_examples=25, deadline=None)
def test_children_strictly_grow(idx, seed):
    params = PROP_PARAMS[idx]
    rs = find_roots(params, bound=50)
    base = list(rs.unexceptional) or list(rs.exceptional[:1])
    if not base:
        return
    t = _entries(base[seed % len(base)])
    depth = 3 + seed % 4
    for _ in range(depth):
        kids = forward_moves(params, t)
        if not kids:
            return
        child = kids[seed % len(kids)]
        assert _entries(child.tuple)[-1] > t[-1]
        t = _entries(child.tuple)
