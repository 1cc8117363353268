import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorenzvol.errors import ContractError, DomainError
from lorenzvol.geometric_lorenz import (
    ReturnMapSpec,
    SuspensionSpec,
    cross_section_stats,
    derive_return_map,
    exit_time,
    fiber,
    flow_box_volume,
    flow_integrate,
    project_to_section,
    return_inverse,
    return_map,
    return_step,
    return_time,
    section_point,
)
from lorenzvol.lorenz_map import LorenzMapSpec
from lorenzvol.model_core import ModelPoint
from lorenzvol.volume_lab import SubdivisionConfig

DEFAULT = ReturnMapSpec()
SUSP = SuspensionSpec()


def test_exponents_follow_the_eigenvalues():
    assert SUSP.rho == 0.75 and SUSP.s == 1.2
    spec = derive_return_map(SUSP)
    assert (spec.base.rho, spec.base.beta, spec.offset, spec.kappa, spec.s) == (0.75, 1.8, 0.4, 0.25, 1.2)


def test_exit_time_closed_form():
    assert exit_time(SUSP, math.exp(-2)) == pytest.approx(2.0, abs=1e-15)
    assert return_time(SUSP, math.exp(-2)) == pytest.approx(3.0, abs=1e-15)


def test_volume_contraction_violation_is_named():
    with pytest.raises(ContractError, match=r"lambda1 \+ lambda3 > 0"):
        derive_return_map(SuspensionSpec(lambda3=-1.5, lambda2=-2.0))


def test_injectivity_needs_separated_branches():
    with pytest.raises(ContractError, match="branch images disjoint"):
        ReturnMapSpec(offset=0.1, kappa=0.25).require_valid()


def test_return_map_hand_values():
    img, jac = return_step(DEFAULT, (0.5, 0.0))
    assert img[0] == pytest.approx(1.8 * 0.5**0.75 - 0.75, abs=1e-15)
    assert img[1] == pytest.approx(0.4 * 0.5**1.2, abs=1e-15)
    assert jac[0, 1] == 0.0
    assert jac[1, 1] == pytest.approx(0.25 * 0.5**1.2, abs=1e-15)


def test_return_map_jacobian_matches_finite_differences():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.7, 0.7, (50, 2))
    pts[:, 0] = np.where(np.abs(pts[:, 0]) < 0.05, 0.3, pts[:, 0])
    _, jac = return_map(DEFAULT, pts)
    h = 1e-7
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = h
        fd = (return_map(DEFAULT, pts + step)[0] - return_map(DEFAULT, pts - step)[0]) / (2 * h)
        np.testing.assert_allclose(jac[:, :, axis], fd, rtol=1e-5, atol=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 0.75), st.floats(-0.75, 0.75))
def test_fiber_is_odd(x, y):
    g1 = fiber(DEFAULT, x, -y)[0]
    g2 = fiber(DEFAULT, -x, y)[0]
    assert abs(g1 + g2) <= 1e-15


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.75, 0.75).filter(lambda v: v != 0), st.floats(-0.75, 0.75), st.floats(-0.75, 0.75))
def test_fiber_contraction(x, y1, y2):
    g1, g2 = fiber(DEFAULT, x, y1)[0], fiber(DEFAULT, x, y2)[0]
    assert abs(g1 - g2) <= 0.25 * 0.75**1.2 * abs(y1 - y2) + 1e-15


def test_semi_conjugacy_to_the_base_map():
    from lorenzvol.lorenz_map import evaluate

    x = np.linspace(-0.75, 0.75, 1001)
    x = x[x != 0]
    img, _ = return_map(DEFAULT, np.stack([x, np.full_like(x, 0.3)], axis=1))
    assert np.array_equal(img[:, 0], evaluate(DEFAULT.base, x)[0])


def test_return_step_domain_errors():
    with pytest.raises(DomainError, match="singular"):
        return_step(DEFAULT, (0.0, 0.1))
    with pytest.raises(DomainError, match="outside"):
        return_step(DEFAULT, (0.8, 0.1))


def test_inverse_recovers_preimages():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-0.75, 0.75, (2000, 2))
    img, _ = return_map(DEFAULT, pts)
    pre, ok = return_inverse(DEFAULT, img)
    assert ok.all()
    np.testing.assert_allclose(pre, pts, atol=1e-9)


def test_points_outside_the_image_have_no_preimage():
    _, ok = return_inverse(DEFAULT, np.array([[0.0, 0.0], [0.74, 0.5]]))
    assert not ok.any()


def test_flow_for_zero_time_is_identity():
    p = section_point(0.3, -0.2)
    assert flow_integrate(SUSP, p, 0.0) == p


def test_flow_reaches_the_exit_face():
    x, y = -0.4, 0.25
    q = flow_integrate(SUSP, section_point(x, y), float(exit_time(SUSP, x)))
    assert q.chart == "tube"
    side, yp, zp, u = q.coords
    assert side == -1.0 and u == 0.0
    assert yp == pytest.approx(y * 0.4**1.2, rel=1e-14)
    assert zp == pytest.approx(0.4**0.75, rel=1e-14)


def test_flow_is_time_additive():
    p = section_point(0.2, 0.1)
    whole = flow_integrate(SUSP, p, 5.0)
    split = flow_integrate(SUSP, flow_integrate(SUSP, p, 1.7), 3.3)
    assert whole.chart == split.chart
    np.testing.assert_allclose(whole.coords, split.coords, rtol=1e-12, atol=1e-14)


def test_flow_round_trip_matches_return_step():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.75, 0.75, (10_000, 2))
    pts = pts[np.abs(pts[:, 0]) > 1e-12]
    img, _ = return_map(DEFAULT, pts)
    worst = 0.0
    for (x, y), target in zip(pts, img):
        q = flow_integrate(SUSP, section_point(x, y), float(return_time(SUSP, x)))
        worst = max(worst, float(np.max(np.abs(np.array(project_to_section(SUSP, q)) - target))))
    assert worst <= 1e-10


def test_stable_manifold_never_leaves():
    q = flow_integrate(SUSP, section_point(0.0, 0.5), 3.0)
    assert q.chart == "saddle" and q.coords[0] == 0.0
    assert q.coords[2] == pytest.approx(math.exp(-0.75 * 3.0))


def test_leaving_the_chart_reports_the_time():
    with pytest.raises(DomainError) as info:
        flow_integrate(SUSP, ModelPoint((0.1, 2.0, 1.0), "saddle"), 1.0)
    assert info.value.exit_time == 0.0
    with pytest.raises(ContractError):
        flow_integrate(SUSP, section_point(0.1, 0.1), -1.0)


def test_depth_zero_is_the_whole_section():
    stats = cross_section_stats(DEFAULT, 0)
    assert stats.areas == (Fraction(9, 4),) and stats.projections == (Fraction(3, 2),)


def test_covers_are_nested_and_shrink():
    cfg = SubdivisionConfig(max_depth=7, seed=3)
    prev = None
    areas = []
    for d in range(4, 8):
        stats = cross_section_stats(DEFAULT, d, cfg)
        cover = stats.cover
        if prev is not None:
            centers = (cover.lows() + cover.widths() / 2).astype(float)
            assert prev.contains(centers).all()
        prev = cover
        areas.append(stats.areas[-1])
    assert all(b <= a for a, b in zip(areas, areas[1:]))


def test_flow_box_volume_is_an_exact_product():
    est = flow_box_volume(SUSP, Fraction(1, 3), 0.01)
    assert est.volume == float(Fraction(15, 1000) * Fraction(1, 3))
    assert flow_box_volume(SUSP, Fraction(1, 3), 0.0).volume == 0.0


def test_flow_box_epsilon_limits():
    with pytest.raises(ContractError, match="cap"):
        flow_box_volume(SUSP, 1, 0.1)
    with pytest.raises(ContractError):
        flow_box_volume(SUSP, 1, -0.01)
    with pytest.raises(ContractError, match="self-intersect"):
        flow_box_volume(SuspensionSpec(lambda3=-0.99, lambda2=-1.2), 1, 0.8, cap=1.0)


def test_cantor_extension_suspension_uses_its_base():
    base = LorenzMapSpec.cantor_extension()
    spec = derive_return_map(SuspensionSpec(base=base))
    assert spec.base is base
