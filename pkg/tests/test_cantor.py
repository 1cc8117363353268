import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorenzvol.cantor import (
    CantorMapSpec,
    GapSchedule,
    build_cover,
    eval_map,
    eval_map_array,
    hoelder_modulus,
    limit_measure,
    limit_measure_bracket,
)
from lorenzvol.errors import ContractError, DomainError, ResourceError

THIRD = GapSchedule.constant(Fraction(1, 3))
INV_SQ = GapSchedule.inverse_square()


@pytest.mark.parametrize("depth", [0, 1, 5, 20])
def test_constant_third_measure_is_exact_power(depth):
    cover = build_cover(THIRD, depth)
    assert cover.measure == Fraction(2, 3) ** depth
    assert len(cover) == 2**depth


def test_cover_endpoints_are_exact_rationals():
    cover = build_cover(THIRD, 2)
    assert cover.intervals() == [
        (Fraction(-1, 2), Fraction(-7, 18)),
        (Fraction(-5, 18), Fraction(-1, 6)),
        (Fraction(1, 6), Fraction(5, 18)),
        (Fraction(7, 18), Fraction(1, 2)),
    ]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.fractions(Fraction(1, 100), Fraction(99, 100), max_denominator=1000))
def test_cover_is_nested_and_disjoint(depth, c):
    sched = GapSchedule.constant(c)
    outer, inner = build_cover(sched, depth - 1), build_cover(sched, depth)
    ivs = inner.intervals()
    assert all(prev[1] < nxt[0] for prev, nxt in zip(ivs, ivs[1:]))
    # child k sits inside parent k // 2
    for k in range(len(inner)):
        a, b = inner.interval(k)
        pa, pb = outer.interval(k // 2)
        assert pa <= a < b <= pb
    assert inner.measure == sum(b - a for a, b in inner.intervals())


def test_inverse_square_limit_matches_sine_product(sine_oracle):
    mid, lo, hi, _ = limit_measure_bracket(INV_SQ, 1e-9)
    assert lo <= sine_oracle <= hi
    assert limit_measure(INV_SQ, 1e-6) == pytest.approx(sine_oracle, rel=1e-6)


def test_constant_schedule_limit_is_zero():
    assert limit_measure(THIRD) == 0.0


def test_explicit_schedule_needs_a_tail_rule():
    with pytest.raises(ContractError, match="tail"):
        build_cover(GapSchedule.explicit([Fraction(1, 3)]), 3)
    sched = GapSchedule.explicit([Fraction(1, 3), Fraction(1, 5)], tail="repeat")
    assert build_cover(sched, 3).measure == Fraction(2, 3) * Fraction(4, 5) ** 2


def test_cover_cap_and_domain():
    with pytest.raises(ResourceError):
        build_cover(THIRD, 12, cap=1000)
    with pytest.raises(ContractError):
        build_cover(GapSchedule.constant(Fraction(3, 2)), 2)


def test_map_sends_child_interval_onto_parent_exactly():
    spec = CantorMapSpec(THIRD, 8)
    fine = build_cover(THIRD, 3)
    coarse = build_cover(THIRD, 2)
    for k in range(len(fine)):
        a, b = fine.interval(k)
        target = coarse.interval(k % 4)
        assert (eval_map(spec, a).value, eval_map(spec, b).value) == target


def test_map_is_continuous_and_increasing_across_gaps():
    spec = CantorMapSpec(INV_SQ, 20)
    x = np.linspace(-0.5, 0.5, 200_001)
    x = x[(x <= float(spec.a)) | (x >= float(spec.b))]
    val, der = eval_map_array(spec, x)
    left, right = val[x <= float(spec.a)], val[x >= float(spec.b)]
    assert np.all(np.diff(left) > 0) and np.all(np.diff(right) > 0)
    assert np.all(der > 0)
    assert left[0] == pytest.approx(-0.5) and right[-1] == pytest.approx(0.5)


def test_scalar_and_vector_evaluation_agree():
    spec = CantorMapSpec(INV_SQ, 20)
    pts = [-0.49, -0.3, -0.26, 0.27, 0.31, 0.4999]
    vec, dvec = eval_map_array(spec, np.array(pts))
    for p, v, d in zip(pts, vec, dvec):
        mv = eval_map(spec, p)
        assert mv.value == pytest.approx(v, abs=1e-13)
        assert mv.derivative == pytest.approx(d, rel=1e-12)


def test_central_gap_is_outside_the_domain():
    with pytest.raises(DomainError, match="central gap"):
        eval_map(CantorMapSpec(THIRD, 5), Fraction(0))


def test_hoelder_running_max_grows_for_inverse_square():
    prof = hoelder_modulus(CantorMapSpec(INV_SQ, 30), 0.5, 25)
    r = prof.running_max
    assert all(r[m] / r[m - 1] >= 1.3 for m in range(9, 25))


def test_hoelder_profile_is_flat_for_constant_schedule():
    prof = hoelder_modulus(CantorMapSpec(THIRD, 30), 0.5, 25)
    assert set(prof.bridge_terms) == {0.0}
    assert len(set(prof.running_max)) == 1


def test_hoelder_rejects_bad_exponent():
    with pytest.raises(ContractError):
        hoelder_modulus(CantorMapSpec(THIRD, 10), 1.5, 5)
