import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panokit import (
    Assignment,
    LossWeights,
    MatchQuery,
    MatchTarget,
    QueryProvenance,
    ValidationError,
    assignment_cost,
    bbox_of,
    build_cost_matrix,
    decoupled_assign,
    giou,
    hungarian,
    mass_center,
    matching_cost,
    oracle_assignment,
)


def test_diagonal_costs_pick_diagonal():
    costs = np.ones((3, 3)) - np.eye(3)
    out = hungarian(costs)
    assert sorted(out.pairs) == [(0, 0), (1, 1), (2, 2)]
    assert assignment_cost(costs, out) == 0.0
    assert out.unmatched_queries == frozenset()


def test_two_by_two_hand_case():
    costs = np.array([[1.0, 2.0], [2.0, 1.0]])
    out = hungarian(costs)
    assert sorted(out.pairs) == [(0, 0), (1, 1)]
    assert assignment_cost(costs, out) == 2.0


def test_rectangular_leaves_queries_unmatched():
    costs = np.array([[5.0], [1.0], [3.0]])
    out = hungarian(costs)
    assert out.pairs == ((1, 0),)
    assert out.unmatched_queries == frozenset({0, 2})


def test_rows_fewer_than_cols_rejected():
    with pytest.raises(ValidationError):
        hungarian(np.zeros((2, 3)))


def test_nonfinite_cost_rejected():
    with pytest.raises(ValidationError):
        hungarian(np.array([[np.inf, 0.0], [0.0, 1.0]]))


def test_zero_targets_fast_path():
    out = hungarian(np.zeros((4, 0)))
    assert out.pairs == () and out.unmatched_queries == frozenset(range(4))


def test_column_offset_invariance():
    rng = np.random.default_rng(0)
    costs = rng.random((5, 4))
    base = hungarian(costs)
    shifted = hungarian(costs + np.array([10.0, -3.0, 0.5, 2.0]))
    assert sorted(base.pairs) == sorted(shifted.pairs)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_hungarian_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    rows = int(rng.integers(1, 8))
    cols = int(rng.integers(0, min(rows, 5) + 1))
    costs = rng.integers(0, 64, (rows, cols)).astype(np.float64) / 8
    fast = hungarian(costs)
    slow = oracle_assignment(costs)
    assert assignment_cost(costs, fast) == assignment_cost(costs, slow)


def test_assignment_duplicate_target_rejected():
    with pytest.raises(ValidationError):
        Assignment(((0, 0), (1, 0)), frozenset())


def test_mass_center_and_bbox():
    m = np.zeros((6, 8), np.float64)
    m[2, 3] = 1.0
    m[2, 5] = 1.0
    cy, cx = mass_center(m)
    assert (cy, cx) == (2.0, 4.0)
    box = bbox_of(m)
    assert tuple(box) == (3.0, 2.0, 6.0, 3.0)


def test_mass_center_empty_rejected():
    with pytest.raises(ValidationError):
        mass_center(np.zeros((4, 4)))


def test_giou_identity_and_disjoint():
    a = np.array([0.0, 0.0, 2.0, 2.0])
    assert giou(a, a) == pytest.approx(1.0)
    b = np.array([4.0, 0.0, 6.0, 2.0])
    # IoU 0, hull 6x2=12, union 8: GIoU = 0 - (12-8)/12
    assert giou(a, b) == pytest.approx(-4.0 / 12.0)


def test_mass_center_mode_hand_value():
    m_q = np.zeros((8, 8), np.float64)
    m_q[2, 2] = 1.0
    m_t = np.zeros((8, 8), np.float64)
    m_t[5, 6] = 1.0
    probs = np.zeros(8, np.float32)
    probs[0] = 1.0
    query = MatchQuery(probs, m_t.astype(np.float32), center=np.array([2.0, 2.0]))
    target = MatchTarget(0, m_t > 0, center=np.array([5.0, 6.0]))
    full = matching_cost(
        query, target, LossWeights(), "mass_center", normalize=False
    )
    no_loc = matching_cost(
        query, target, LossWeights(lambda_det=0.0), "mass_center", normalize=False
    )
    assert full - no_loc == pytest.approx(7.0)  # L1((2,2),(5,6)) = 3+4


def test_matching_cost_floor_at_exact_reproduction():
    mask = np.zeros((8, 8), np.float32)
    mask[2:5, 2:5] = 1.0
    probs = np.zeros(8, np.float32)
    probs[3] = 1.0
    box = bbox_of(mask)
    query = MatchQuery(probs, mask, box=box, center=mass_center(mask.astype(np.float64)))
    target = MatchTarget(
        3, mask > 0.5, box=box, center=mass_center(mask.astype(np.float64))
    )
    cost = matching_cost(query, target, LossWeights(), "box")
    # focal is 0 at p=1 with clamped logs, dice hits 1-(2A+eps)/(2A+eps)=0,
    # location is L1(identical boxes) + (1 - GIoU(identical boxes)) = 0
    assert cost == pytest.approx(0.0, abs=1e-9)


def test_build_cost_matrix_agrees_with_hungarian_oracle():
    rng = np.random.default_rng(9)
    queries = []
    targets = []
    for i in range(3):
        m = (rng.random((8, 8)) > 0.5).astype(np.float32)
        probs = rng.random(8).astype(np.float32)
        queries.append(
            MatchQuery(probs, m, box=bbox_of(m), center=mass_center(m.astype(np.float64)))
        )
    for i in range(2):
        m = rng.random((8, 8)) > 0.5
        targets.append(
            MatchTarget(i, m, box=bbox_of(m), center=mass_center(m.astype(np.float64)))
        )
    costs = build_cost_matrix(queries, targets, LossWeights(), "box")
    assert costs.shape == (3, 2)
    fast = hungarian(costs)
    slow = oracle_assignment(costs)
    assert assignment_cost(costs, fast) == pytest.approx(
        assignment_cost(costs, slow)
    )


def test_unknown_location_mode_rejected():
    probs = np.ones(3, np.float32)
    m = np.ones((4, 4), np.float32)
    query = MatchQuery(probs, m, box=bbox_of(m))
    target = MatchTarget(0, m > 0.5, box=bbox_of(m))
    with pytest.raises(ValidationError):
        matching_cost(query, target, LossWeights(), "corners")


def test_decoupled_layout_300_53():
    # 300 thing queries, 53 class-fixed stuff queries, 2 GT things,
    # one stuff category present
    rng = np.random.default_rng(1)
    costs = rng.random((300, 2))
    stuff_queries = tuple(
        QueryProvenance(300 + j, False, 100 + j) for j in range(53)
    )
    out = decoupled_assign(costs, stuff_queries, frozenset({100}))
    assert len(out.things.pairs) == 2
    assert len(out.things.unmatched_queries) == 298
    assert out.stuff_pairs == ((300, 100),)
    assert out.unmatched_stuff == frozenset(range(301, 353))


def test_decoupled_no_ground_truth():
    stuff_queries = (QueryProvenance(5, False, 7),)
    out = decoupled_assign(np.zeros((4, 0)), stuff_queries, frozenset())
    assert out.things.pairs == ()
    assert out.things.unmatched_queries == frozenset(range(4))
    assert out.stuff_pairs == ()
    assert out.unmatched_stuff == frozenset({5})


def test_decoupled_rejects_thing_on_stuff_side():
    with pytest.raises(ValidationError):
        decoupled_assign(np.zeros((1, 0)), (QueryProvenance(1, True),), frozenset())
