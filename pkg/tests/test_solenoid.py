import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorenzvol.errors import ContractError, ResourceError
from lorenzvol.solenoid import (
    SolenoidSpec,
    preimages,
    slice_cover,
    solenoid_step,
    star_condition,
    theta,
    verify_injectivity,
)

DEFAULT = SolenoidSpec()
CLASSIC = SolenoidSpec(matrix=((2,),), contraction=Fraction(1, 10), weights=(Fraction(1, 2),))


def test_defaults_validate():
    assert DEFAULT.validate().ok
    assert DEFAULT.branches == 4 and len(DEFAULT.coset_reps) == 4


def test_step_at_origin_is_theta_of_zero():
    z, w = solenoid_step(DEFAULT, [[0.0, 0.0]], [[0.0, 0.0]])
    np.testing.assert_array_equal(w, [[0.25 + 0.0625, 0.0]])
    np.testing.assert_array_equal(z, [[0.0, 0.0]])


def test_two_steps_unroll():
    z0 = np.array([[0.1, 0.7]])
    z1, w1 = solenoid_step(DEFAULT, z0, [[0.0, 0.0]])
    _, w2 = solenoid_step(DEFAULT, z1, w1)
    expected = float(DEFAULT.contraction) * theta(DEFAULT, z0) + theta(DEFAULT, np.mod(2 * z0, 1))
    np.testing.assert_allclose(w2, expected, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 2**20), min_size=2, max_size=2), st.integers(1, 30))
def test_base_projection_is_the_torus_map(num, steps):
    # dyadic base points make doubling mod 1 exact
    z = np.array([[n / 2**20 for n in num]])
    w = np.array([[0.3, -0.2]])
    expect = [Fraction(n, 2**20) for n in num]
    for _ in range(steps):
        z, w = solenoid_step(DEFAULT, z, w)
        expect = [(2 * e) % 1 for e in expect]
        assert [Fraction(v) for v in z[0]] == expect
        assert np.linalg.norm(w) <= 1


def test_fiber_must_be_in_the_disk():
    with pytest.raises(ContractError):
        solenoid_step(DEFAULT, [[0.0, 0.0]], [[1.0, 0.5]])


def test_preimages_map_back():
    z = np.random.default_rng(0).random((100, 2))
    pre = preimages(DEFAULT, z)
    for b in range(4):
        np.testing.assert_allclose(np.mod(2 * pre[:, b], 1), z, atol=1e-14)


def test_default_injectivity_margin_is_one_sixteenth():
    rep = verify_injectivity(DEFAULT)
    assert rep.passed
    assert rep.margin >= 1 / 16


def test_weak_contraction_fails_injectivity():
    rep = verify_injectivity(SolenoidSpec(contraction=Fraction(1, 8)))
    assert not rep.passed
    assert rep.margin == pytest.approx(1 / 8 - 1 / 4)
    with pytest.raises(ContractError):
        SolenoidSpec(contraction=Fraction(1, 8)).require_valid()


def test_classical_solenoid_passes():
    rep = verify_injectivity(CLASSIC)
    assert rep.passed and rep.margin == pytest.approx(1 - 0.2)


def test_level_zero_is_the_unit_disk():
    cov = slice_cover(DEFAULT, [0.2, 0.4], 0)
    assert cov.count == 1 and cov.area_over_pi == 1 and cov.inscribed_radius == 1


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_slice_area_identity(n):
    cov = slice_cover(DEFAULT, [0.2, 0.4], n)
    assert cov.count == 4**n
    assert cov.area_over_pi == Fraction(1, 2 ** (8 * n))
    assert cov.inscribed_radius == Fraction(1, 32**n)


def test_level_three_example():
    cov = slice_cover(DEFAULT, [0.0, 0.0], 3)
    assert cov.count == 64 and cov.radius == Fraction(1, 32**3)
    assert cov.area_over_pi == 64 * Fraction(1, 32**6) == Fraction(1, 2**24)


def test_disks_nest_across_levels():
    z = [0.37, 0.81]
    coarse, fine = slice_cover(DEFAULT, z, 2), slice_cover(DEFAULT, z, 3)
    r0, r1 = float(coarse.radius), float(fine.radius)
    d = np.linalg.norm(fine.centers[:, None, :] - coarse.centers[None, :, :], axis=2)
    inside = d + r1 <= r0 + 1e-15
    assert np.all(inside.sum(axis=1) == 1)


def test_slice_centers_are_attractor_points():
    # pushing a level-n centre forward n times along its branch lands near theta chains
    z = np.array([0.37, 0.81])
    cov = slice_cover(DEFAULT, z, 1)
    pre = preimages(DEFAULT, z[None])[0]
    np.testing.assert_allclose(np.sort(cov.centers, axis=0), np.sort(theta(DEFAULT, pre), axis=0), atol=1e-15)


def test_slice_cap():
    with pytest.raises(ResourceError):
        slice_cover(DEFAULT, [0.0, 0.0], 6, cap=1000)
    with pytest.raises(ContractError):
        slice_cover(DEFAULT, [0.0, 0.0], -1)


def test_star_condition_examples():
    (v4,) = star_condition(DEFAULT, [[0.1, 0.2]], 4, 1e-3)
    assert v4.no_disk and v4.totally_disconnected
    (v0,) = star_condition(DEFAULT, [[0.1, 0.2]], 0, 0.5)
    assert not v0.no_disk and not v0.totally_disconnected


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_totally_disconnected_for_every_positive_level(n):
    fibers = np.random.default_rng(n).random((5, 2))
    assert all(v.totally_disconnected for v in star_condition(DEFAULT, fibers, n, 1e-3))
