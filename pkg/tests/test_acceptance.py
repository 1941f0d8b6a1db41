"""End-to-end checks on the reference disk scenarios"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.bounds import (
    EnvelopeConstants,
    lower_bound_T,
    upper_bound_Tbar,
    young_constant,
)
from src.core.domain import DomainDescriptor, discretize
from src.core.evolution import extrapolate_blowup
from src.core.scalar_ode import Majorant, Minorant, integrate_scalar_ode
from src.core.scenarios import ScenarioManager
from src.core.spectrum import clamped_eigenpair
from src.core.verification import PASS, verify


@given(
    A=st.floats(1e-2, 10.0),
    B=st.floats(1e-2, 10.0),
    p=st.floats(1.01, 5.0),
    phi0=st.floats(1e-2, 1e2),
)
@settings(max_examples=1000, deadline=None)
def test_majorant_oracle(A, B, p, phi0):
    consts = EnvelopeConstants(A=A, B=B, Phi0=phi0)
    expected = lower_bound_T(consts, p, 1.0 + 0.5 * (p - 1.0))
    result = integrate_scalar_ode(Majorant(A=A, B=B, p=p), phi0)
    assert result.blowup_time == pytest.approx(expected, rel=1e-6)


@given(
    a=st.floats(1e-2, 10.0),
    cbar=st.floats(1e-2, 10.0),
    p=st.floats(1.01, 5.0),
    margin=st.floats(1.1, 100.0),
)
@settings(max_examples=1000, deadline=None)
def test_minorant_oracle(a, cbar, p, margin):
    psi0 = margin * (a / cbar) ** (1.0 / (p - 1.0))
    consts = EnvelopeConstants(delta=1.0, Lambda1=a, cbar=cbar)
    expected = upper_bound_Tbar(consts, p, psi0).Tbar
    result = integrate_scalar_ode(Minorant(a=a, cbar=cbar, p=p), psi0)
    assert result.blowup_time == pytest.approx(expected, rel=1e-6)


@given(x=st.floats(0.0, 1e2), y=st.floats(0.0, 1e2), p=st.floats(1.01, 5.0), fraction=st.floats(0.01, 1.0))
@settings(max_examples=1000, deadline=None)
def test_scalar_inequality_steps(x, y, p, fraction):
    q = 1.0 + fraction * (p - 1.0)
    slack = 1e-10 * max(1.0, x ** p, y ** p)
    assert x ** p >= x ** q - young_constant(p, q) - slack
    assert (x + y) ** q <= 2.0 ** (q - 1.0) * (x ** q + y ** q) + slack


@given(seed=st.integers(0, 2 ** 32 - 1), p=st.floats(1.01, 5.0))
@settings(max_examples=1000, deadline=None)
def test_discrete_inequality_steps(seed, p):
    desc = DomainDescriptor("ball", dimension=2, resolution=16)
    disc = discretize(desc)
    eig = clamped_eigenpair(desc)
    rng = np.random.default_rng(seed)
    u, w = rng.standard_normal((2, disc.grid.n_interior))
    v = np.abs(u)

    energy = disc.bilaplacian.energy(u)
    assert energy >= eig.lambda1 * float(disc.mass @ u ** 2) * (1 - 1e-10)

    weights = disc.quadrature.weights
    green = float(u @ (disc.bilaplacian.stiffness @ w))
    assert green == pytest.approx(float(weights @ (disc.laplacian_values(u) * disc.laplacian_values(w))),
                                  rel=1e-10, abs=1e-10 * energy)

    weighted = disc.mass * eig.interior
    lhs = float(weighted @ v ** p)
    assert lhs >= desc.measure ** (-(p - 1.0) / 2.0) * float(weighted @ v) ** p * (1 - 1e-10)


@pytest.mark.slow
def test_disk_blowup_sandwich_full_resolution():
    report = verify(ScenarioManager().scenario("disk-blowup").with_overrides({"resolution": "256"}))
    assert report.sandwich == PASS
    low, high = report.tstar_bracket
    assert report.T_lower <= low <= high <= report.T0_upper


def test_disk_blowup_sandwich():
    report = verify(ScenarioManager().scenario("disk-blowup"))
    assert report.flags["H_positive_on_ray"]
    assert report.sandwich == PASS
    low, high = report.tstar_bracket
    assert report.T_lower <= low <= high <= report.T0_upper
    assert report.checks["psi_increasing"]
    assert report.checks["nonnegative"] is not None


def test_safe_interval():
    report = verify(ScenarioManager().scenario("disk-small-data"))
    assert report.trajectory.final_time == pytest.approx(report.T_lower)
    assert report.checks["majorant_comparison"]
    assert report.checks["l2_bound"]
    assert np.all(np.isfinite(report.trajectory.column("phi")))


@pytest.mark.slow
@pytest.mark.parametrize("multiple, blows_up", [(1.2, True), (1.5, True), (0.25, False)])
def test_corollary_threshold(multiple, blows_up):
    base = ScenarioManager().scenario("disk-corollary")
    reference = verify(base)
    report = verify(base.with_overrides({"threshold_multiple": str(multiple)}))
    traj = report.trajectory
    if blows_up:
        assert traj.verdict == "blowup-detected"
        assert report.tstar < 1.1 * report.Tbar_upper
    else:
        assert traj.verdict == "completed-horizon"
        assert report.Tbar_upper is None
        assert traj.final_time >= 3.0 * reference.Tbar_upper


def test_extrapolator_calibration():
    rng = np.random.default_rng(2024)
    p = 3.0
    t = np.linspace(0.9, 0.999, 40)
    exact = (1.0 - t) ** (-1.0 / (p - 1.0))
    assert abs(extrapolate_blowup(t, exact, p).tstar - 1.0) <= 1e-6
    errors = [
        abs(extrapolate_blowup(t, exact * (1.0 + 0.01 * rng.standard_normal(t.size)), p).tstar - 1.0)
        for _ in range(100)
    ]
    assert max(errors) <= 1e-2
