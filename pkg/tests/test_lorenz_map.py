import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorenzvol.cantor import CantorMapSpec, GapSchedule, limit_measure
from lorenzvol.errors import ContractError, NoSuchBranchError
from lorenzvol.lorenz_map import (
    LorenzMapSpec,
    branch_inverse,
    branch_range,
    distortion,
    evaluate,
    f_scalar,
    inf_derivative,
    invariant_cover,
    inverse_branch,
    validate_properties,
)

POWER = LorenzMapSpec.power_law()
EXT = LorenzMapSpec.cantor_extension()
EXT_THIRD = LorenzMapSpec.cantor_extension(CantorMapSpec(GapSchedule.constant(Fraction(1, 3)), 30))


def test_power_law_properties_and_witnesses():
    rep = validate_properties(POWER)
    assert rep.ok
    # closed forms: beta (3/4)^rho - 3/4 and beta rho (3/4)^(rho-1)
    assert rep.witnesses["f(3/4)"] == pytest.approx(1.8 * 0.75**0.75 - 0.75, abs=1e-12)
    assert rep.witnesses["f(3/4)"] == pytest.approx(0.7007, abs=1e-3)
    assert rep.witnesses["min_derivative"] == pytest.approx(1.8 * 0.75 * 0.75**-0.25, abs=1e-12)
    assert rep.witnesses["min_derivative"] == pytest.approx(1.4507, abs=1e-3)


def test_weak_power_law_fails_the_expansion_floor():
    rep = validate_properties(LorenzMapSpec.power_law(beta=1.0))
    assert not rep.ok
    assert inf_derivative(LorenzMapSpec.power_law(beta=1.0)) == pytest.approx(0.806, abs=1e-3)


def test_cantor_extension_properties_pass():
    rep = validate_properties(EXT)
    assert rep.ok, rep.report.failures()
    # derivative blows up at the discontinuity
    assert rep.witnesses["derivative_at_1e-3_1e-6_1e-9"] == sorted(rep.witnesses["derivative_at_1e-3_1e-6_1e-9"])


@pytest.mark.parametrize("spec", [POWER, EXT], ids=["power-law", "cantor-extension"])
def test_branches_are_increasing_and_odd(spec):
    x = np.linspace(1e-6, 0.75, 5001)
    v, d = evaluate(spec, x)
    assert np.all(np.diff(v) > 0) and np.all(d > 0)
    np.testing.assert_allclose(evaluate(spec, -x)[0], -v, atol=1e-15)
    assert math.isnan(evaluate(spec, np.array([0.0]))[0][0])


@pytest.mark.parametrize("spec", [POWER, EXT], ids=["power-law", "cantor-extension"])
def test_branch_inverse_round_trip(spec):
    lo, hi = branch_range(spec, 1)
    y = np.linspace(lo + 0.01, hi - 0.001, 101)
    x = branch_inverse(spec, 1, y)
    np.testing.assert_allclose(evaluate(spec, x)[0], y, atol=1e-10)


def test_closed_form_power_law_inverse():
    lo, hi = inverse_branch(POWER, "+", (0.1, 0.2))
    assert lo == pytest.approx(((0.1 + 0.75) / 1.8) ** (1 / 0.75), rel=1e-14)
    assert hi == pytest.approx(((0.2 + 0.75) / 1.8) ** (1 / 0.75), rel=1e-14)


def test_empty_itinerary_returns_target():
    assert inverse_branch(POWER, (), (0.1, 0.3)) == (0.1, 0.3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from("+-"), min_size=1, max_size=8), st.floats(-0.3, 0.3))
def test_inverse_branch_contracts_and_maps_back(itin, c):
    target = (c - 0.02, c + 0.02)
    try:
        lo, hi = inverse_branch(POWER, itin, target)
    except NoSuchBranchError:
        return
    assert hi - lo <= 1.4507 ** -len(itin) * 0.04 * (1 + 1e-9)
    ends = np.array([lo, hi])
    for _ in itin:
        ends = evaluate(POWER, ends)[0]
    np.testing.assert_allclose(ends, target, atol=1e-10)


def test_inconsistent_itinerary_names_the_step():
    # f_+ maps (0, 3/4] onto (-3/4, 0.7007], so 0.72 has no + preimage
    with pytest.raises(NoSuchBranchError) as info:
        inverse_branch(POWER, "-+", (0.71, 0.72))
    assert info.value.step == 1


def test_invariant_cover_depth_zero():
    cov = invariant_cover(POWER, 0)
    assert cov.measure == Fraction(3, 2)
    assert cov.intervals() == [(Fraction(-3, 4), Fraction(3, 4))]


def test_cantor_extension_cover_measure_near_limit():
    cov = invariant_cover(EXT, 20)
    assert abs(float(cov.measure) - limit_measure(GapSchedule.inverse_square())) <= 0.02


def test_constant_schedule_cover_decays_geometrically():
    meas = [invariant_cover(EXT_THIRD, k).measure for k in range(3, 21)]
    assert all(b / a <= Fraction(67, 100) for a, b in zip(meas, meas[1:]))


def test_extension_maps_deeper_intervals_onto_shallower_ones():
    fine, coarse = invariant_cover(EXT, 6), invariant_cover(EXT, 5)
    targets = set(coarse.intervals())
    for a, b in fine.intervals():
        assert (f_scalar(EXT, a), f_scalar(EXT, b)) in targets


def test_power_law_cylinders_partition_the_domain():
    cov = invariant_cover(POWER, 6)
    lo, hi = cov.float_bounds()
    assert lo[0] == -0.75 and hi[-1] == pytest.approx(0.75)
    assert np.all(np.abs(lo[1:] - hi[:-1]) < 1e-12)
    assert cov.itineraries is not None and all(len(i) == 6 for i in cov.itineraries)


def test_affine_bridges_have_no_distortion():
    rep = distortion(EXT_THIRD, 6, 0.02, centers=[-0.3, 0.35])
    assert rep.value == 1.0


def test_distortion_small_ball_near_one():
    rep = distortion(POWER, 1, 1e-4, centers=[-0.5, -0.3, -0.1, 0.1, 0.3, 0.5])
    assert 1.0 <= rep.value <= 1.01


@pytest.mark.parametrize("center", [-0.3, -0.1, 0.2])
def test_distortion_monotone_in_radius(center):
    # compared only where both radii admit the same itineraries
    reports = [distortion(POWER, 6, r, centers=[center]) for r in (0.01, 0.02, 0.04)]
    assert len({r.admissible for r in reports}) == 1
    values = [r.value for r in reports]
    assert 1.0 <= values[0] <= values[1] <= values[2]


def test_distortion_rejects_bad_arguments():
    with pytest.raises(ContractError):
        distortion(POWER, 0, 0.05)
    with pytest.raises(ContractError):
        distortion(POWER, 3, 0.5)


@pytest.mark.slow
def test_distortion_plateaus_once_saturated():
    d15 = distortion(POWER, 15, 0.05).value
    d18 = distortion(POWER, 18, 0.05).value
    assert d18 / d15 <= 1.05


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="brute-force table: D_n jumps between n = 12 and n = 14, ratio D_15/D_10 = 1.16")
def test_distortion_stable_between_ten_and_fifteen():
    assert distortion(POWER, 15, 0.05).value / distortion(POWER, 10, 0.05).value <= 1.05
