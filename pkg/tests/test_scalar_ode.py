import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.exceptions import ValidationError
from src.core.scalar_ode import (
    HFlow,
    Majorant,
    Minorant,
    integrate_scalar_ode,
    majorant_solution,
    minorant_blowup_time,
)


def test_majorant_blows_up_at_log_two():
    result = integrate_scalar_ode(Majorant(A=0.5, B=1.0, p=2.0), 1.0)
    assert result.blowup_time == pytest.approx(math.log(2.0), rel=1e-6)


def test_majorant_closed_form_matches_integration():
    model = Majorant(A=0.5, B=1.0, p=2.0)
    t = np.linspace(0.0, 0.6, 7)
    result = integrate_scalar_ode(model, 1.0, t_end=0.6)
    closed = majorant_solution(model, 1.0, result.t)
    np.testing.assert_allclose(result.x, closed, rtol=1e-7)
    assert np.isinf(majorant_solution(model, 1.0, np.array([0.7]))[0])
    np.testing.assert_allclose(majorant_solution(model, 1.0, t)[0], 1.0)


def test_majorant_without_linear_term():
    model = Majorant(A=0.5, B=0.0, p=3.0)
    result = integrate_scalar_ode(model, 2.0)
    # x' = x^3 from 2 blows up at 1 / (2 * 2^2)
    assert result.blowup_time == pytest.approx(0.125, rel=1e-7)


def test_threshold_event():
    result = integrate_scalar_ode(Majorant(A=0.5, B=0.0, p=2.0), 1.0, x_threshold=10.0)
    assert result.reached_threshold
    assert result.blowup_time is None
    assert result.t[-1] == pytest.approx(0.9, rel=1e-8)


def test_minorant_below_threshold_does_not_blow_up():
    model = Minorant(a=1.0, cbar=2.0, p=2.0)
    assert minorant_blowup_time(model, 0.4) is None
    result = integrate_scalar_ode(model, 0.4, t_end=50.0)
    assert result.blowup_time is None
    assert result.x[-1] < 0.4


def test_minorant_above_threshold():
    model = Minorant(a=1.0, cbar=1.0, p=2.0)
    exact = minorant_blowup_time(model, 2.0)
    assert exact == pytest.approx(math.log(2.0), rel=1e-12)
    assert integrate_scalar_ode(model, 2.0).blowup_time == pytest.approx(exact, rel=1e-6)


def test_h_flow_rhs():
    flow = HFlow(lambda1=1.0, delta=1.0, c=2.0, Q=4.0 / 27.0, q=2.0)
    assert flow.rhs(2.0) == pytest.approx(2.0 - 8.0 / 27.0)
    assert flow.rhs(0.0) == pytest.approx(-8.0 / 27.0)


@pytest.mark.parametrize("x0", [0.0, -1.0])
def test_rejects_nonpositive_start(x0):
    with pytest.raises(ValidationError):
        integrate_scalar_ode(Majorant(A=1.0, B=1.0, p=2.0), x0)


def test_rejects_exponent_not_above_one():
    with pytest.raises(ValidationError):
        integrate_scalar_ode(Majorant(A=1.0, B=1.0, p=1.0), 1.0)


@given(
    A=st.floats(0.01, 10.0),
    B=st.floats(0.01, 10.0),
    p=st.floats(1.05, 5.0),
    x0=st.floats(0.01, 100.0),
)
@settings(max_examples=100, deadline=None)
def test_majorant_blowup_time_matches_closed_form(A, B, p, x0):
    exact = math.log1p(B / (2.0 * A) * x0 ** (1.0 - p)) / (B * (p - 1.0))
    result = integrate_scalar_ode(Majorant(A=A, B=B, p=p), x0)
    assert result.blowup_time == pytest.approx(exact, rel=1e-6)
