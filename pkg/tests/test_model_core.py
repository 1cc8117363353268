from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorenzvol.errors import ContractError, DomainError, NumericError
from lorenzvol.model_core import (
    ModelHandle,
    ModelPoint,
    interval_model,
    iterate,
    linear_model,
    orbit,
    product,
    tangent_along,
)


def tent_exact(x: Fraction) -> Fraction:
    return 2 * x if x <= Fraction(1, 2) else 2 - 2 * x


def test_handle_rejects_unknown_kind_and_bad_domain():
    with pytest.raises(ContractError, match="kind"):
        ModelHandle("torus", None, 1, "c", ((0, 1),), step=lambda p: p)
    with pytest.raises(ContractError, match="domain"):
        ModelHandle("linear", None, 2, "c", ((0, 1),), step=lambda p: p)
    with pytest.raises(ContractError, match="exact"):
        ModelHandle("linear", None, 1, "c", ((0, 1),), step=lambda p: p, mode="exact")


def test_exact_orbit_stays_rational():
    model = interval_model(lambda x: np.where(x <= 0.5, 2 * x, 2 - 2 * x), domain=(0.0, 1.0), exact=tent_exact)
    orb = orbit(model, Fraction(1, 7), 6)
    assert orb.points[-1] == (Fraction(6, 7),)
    assert orb.points[4] == orb.points[1]
    assert [p[0] for p in orb.points[:4]] == [Fraction(1, 7), Fraction(2, 7), Fraction(4, 7), Fraction(6, 7)]


def test_orbit_accepts_model_points_and_checks_dimension():
    model = linear_model([[2.0, 0.0], [0.0, 0.5]])
    orb = orbit(model, ModelPoint((1.0, 1.0), "euclidean"), 3)
    np.testing.assert_allclose(orb.points[-1], [8.0, 0.125])
    with pytest.raises(DomainError):
        orbit(model, (1.0,), 3)
    with pytest.raises(ContractError):
        orbit(model, (1.0, 1.0), -1)


def test_orbit_outside_chart_is_a_domain_error():
    model = interval_model(lambda x: x / 2, domain=(0.0, 1.0))
    with pytest.raises(DomainError):
        orbit(model, 2.0, 1)


def test_orbit_stops_at_singular_set():
    base = interval_model(lambda x: x - 0.25, domain=(-1.0, 1.0))
    model = ModelHandle(
        "interval", None, 1, "interval", ((-1.0, 1.0),), step=base.step, singular=lambda p: np.abs(p[:, 0]) < 1e-12
    )
    orb = orbit(model, 0.5, 5)
    assert orb.stopped_early and orb.singular_step == 2
    assert len(orb) == 3


def test_nonfinite_step_raises_numeric_error_with_step():
    model = interval_model(lambda x: x * 1e200, domain=(-np.inf, np.inf))
    with np.errstate(over="ignore"), pytest.raises(NumericError) as info:
        orbit(model, 1e200, 3)
    assert info.value.step == 1


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.integers(1, 6))
def test_tangent_product_of_linear_map_is_matrix_power(entries, n):
    a = np.array(entries).reshape(2, 2)
    model = linear_model(a)
    m = product(tangent_along(model, (0.3, -0.2), n))
    np.testing.assert_allclose(m, np.linalg.matrix_power(a, n), atol=1e-9)


def test_product_needs_tangents():
    with pytest.raises(ContractError):
        product([])


def test_iterate_freezes_dead_points():
    model = ModelHandle(
        "interval",
        None,
        1,
        "interval",
        ((-1.0, 1.0),),
        step=lambda p: 2 * p,
        singular=lambda p: p[:, 0] == 0,
    )
    pts, alive = iterate(model, np.array([[0.0], [0.25]]), 3)
    assert alive.tolist() == [False, True]
    assert pts[:, 0].tolist() == [0.0, 2.0]
