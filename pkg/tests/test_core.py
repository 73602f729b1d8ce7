from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcplab import (BcpInstance, DecisionOutcome, SparseSet, Thresholds, intersection_size,
                    make_sparse_set)
from bcplab.core import as_fraction
from bcplab.errors import UndefinedSimilarityError, ValidationError


def id_lists(max_d=40):
    return st.integers(1, max_d).flatmap(
        lambda d: st.tuples(st.just(d), st.lists(st.integers(0, d - 1), max_size=2 * d)))


def test_make_sparse_set_normalises():
    s = make_sparse_set([3, 1, 1], 4)
    assert s.to_list() == [1, 3] and s.universe_size == 4


def test_make_sparse_set_empty():
    s = make_sparse_set([], 10)
    assert len(s) == 0 and s.universe_size == 10


def test_make_sparse_set_out_of_range_names_the_id():
    with pytest.raises(ValidationError, match="element 5 ≥ universe 4"):
        make_sparse_set([5], 4)


def test_make_sparse_set_rejects_negative_and_bad_universe():
    with pytest.raises(ValidationError):
        make_sparse_set([-1], 4)
    with pytest.raises(ValidationError):
        make_sparse_set([0], 0)
    with pytest.raises(ValidationError):
        make_sparse_set([0.5], 3)


def test_constructor_validates_order():
    with pytest.raises(ValidationError, match="strictly increasing"):
        SparseSet([2, 1], 5)
    with pytest.raises(ValidationError):
        SparseSet([1, 1], 5)
    assert SparseSet(iter([0, 4]), 5).to_list() == [0, 4]


def test_sets_are_immutable_and_hashable():
    s = make_sparse_set([1, 2], 5)
    with pytest.raises(ValueError):
        s.elements[0] = 7
    assert hash(s) == hash(make_sparse_set([2, 1], 5))
    assert s != make_sparse_set([1, 2], 6)
    assert 2 in s and 3 not in s


@given(id_lists())
def test_make_sparse_set_idempotent(data):
    d, ids = data
    s = make_sparse_set(ids, d)
    assert make_sparse_set(s.to_list(), d) == s
    assert s.to_list() == sorted(set(ids))


@pytest.mark.parametrize("a,b,expected", [([1, 2, 3], [2, 3, 4], 2), ([0, 1], [2, 3], 0)])
def test_intersection_size(a, b, expected):
    assert intersection_size(make_sparse_set(a, 8), make_sparse_set(b, 8)) == expected


def test_intersection_size_identity_and_mismatch():
    a = make_sparse_set([1, 4, 6], 8)
    assert intersection_size(a, a) == 3
    with pytest.raises(ValidationError):
        intersection_size(a, make_sparse_set([1], 9))


@settings(max_examples=200)
@given(id_lists(), st.data())
def test_intersection_bounded_with_equality_iff_containment(data, more):
    d, ids = data
    other = more.draw(st.lists(st.integers(0, d - 1), max_size=2 * d))
    a, b = make_sparse_set(ids, d), make_sparse_set(other, d)
    x = intersection_size(a, b)
    assert x == len(set(ids) & set(other))
    assert x <= min(len(a), len(b))
    assert (x == min(len(a), len(b))) == (a.issubset(b) or b.issubset(a))


def test_thresholds_exact_and_ordered():
    th = Thresholds(0.5, 0.2)
    assert th.upper == Fraction(1, 2) and th.lower == Fraction(1, 5)
    for bad in ((0.2, 0.5), (0.5, 0.0), (1.5, 0.2), (0.5, 0.5)):
        with pytest.raises(ValidationError):
            Thresholds(*bad)
    h = Thresholds.hamming(30, 40)
    assert h.units == "distance" and h.lower == 30 and h.upper == 40


def test_as_fraction_uses_decimal_repr():
    assert as_fraction(0.1) == Fraction(1, 10)
    assert as_fraction(np.int64(3)) == 3
    with pytest.raises(ValidationError):
        as_fraction(float("nan"))


def test_decision_outcome_presence_rule():
    with pytest.raises(ValidationError):
        DecisionOutcome((0, 1), None)
    with pytest.raises(ValidationError):
        DecisionOutcome(None, Fraction(1, 2))
    out = DecisionOutcome((0, 1), Fraction(1, 2))
    assert out.is_found and out.to_dict()["achieved_similarity_exact"] == "1/2"
    assert not DecisionOutcome().is_found


def test_instance_validation():
    with pytest.raises(ValidationError):
        BcpInstance((), (make_sparse_set([0], 2),), 2)
    with pytest.raises(ValidationError):
        BcpInstance((make_sparse_set([0], 3),), (make_sparse_set([0], 2),), 2)
    inst = BcpInstance.from_lists([[0, 1]], [[1], []], 2)
    assert inst.n == 2 and list(inst.blue_sizes()) == [1, 0]
    with pytest.raises(UndefinedSimilarityError):
        inst.require_nonempty_sets()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 32))
def test_cross_intersections_match_pairwise(d, nr, nb, seed):
    rng = np.random.default_rng(seed)
    sets = [[rng.choice(d, int(rng.integers(0, d + 1)), replace=False) for _ in range(k)]
            for k in (nr, nb)]
    inst = BcpInstance.from_lists(sets[0], sets[1], d)
    got = inst.cross_intersections()
    want = np.array([[intersection_size(a, b) for b in inst.blue] for a in inst.red])
    assert np.array_equal(got, want)
    assert np.array_equal(inst.cross_intersections(slice(1, 3)), want[1:3])


def test_cross_intersections_chunked_columns(monkeypatch):
    import bcplab.core as core

    monkeypatch.setattr(core, "_COLUMN_CHUNK", 7)
    rng = np.random.default_rng(3)
    inst = BcpInstance.from_lists([rng.choice(100, 40, replace=False) for _ in range(5)],
                                  [rng.choice(100, 30, replace=False) for _ in range(4)], 100)
    want = np.array([[intersection_size(a, b) for b in inst.blue] for a in inst.red])
    assert np.array_equal(inst.cross_intersections(), want)
