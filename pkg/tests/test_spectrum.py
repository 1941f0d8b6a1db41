import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.domain import DomainDescriptor, discretize, norm_Lr
from src.core.exceptions import ValidationError
from src.core.spectrum import (
    SAFETY_FACTOR,
    check_exponent,
    clamped_ball_eigenvalue,
    clamped_eigenpair,
    first_eigenpair,
    embedding_exponent_range,
    probe_ratios,
    sobolev_constant,
    sobolev_ratio,
    verify_positivity,
)

DISK_LAMBDA1 = 104.3631


def test_bessel_oracle_for_unit_disk():
    assert clamped_ball_eigenvalue(2, 1.0) == pytest.approx(DISK_LAMBDA1, abs=1e-3)


def test_bessel_oracle_scales_with_radius():
    assert clamped_ball_eigenvalue(2, 2.0) == pytest.approx(clamped_ball_eigenvalue(2, 1.0) / 16, rel=1e-12)


def test_solver_scales_with_radius(disk_eig):
    large = clamped_eigenpair(DomainDescriptor("ball", dimension=2, radius=2.0, resolution=64))
    assert large.lambda1 == pytest.approx(disk_eig.lambda1 / 16, rel=1e-8)


def test_disk_eigenpair(disk_eig, disk):
    assert disk_eig.lambda1 == pytest.approx(clamped_ball_eigenvalue(2, 1.0), rel=5e-3)
    assert disk_eig.residual <= 1e-6
    assert norm_Lr(disk_eig.phi1, discretize(disk).quadrature, 2) == pytest.approx(1.0, abs=1e-12)
    assert disk_eig.phi1.is_clamped_compatible()

    report = verify_positivity(disk_eig)
    assert report.passed
    assert not report.informational


def test_eigenvalue_converges_at_second_order():
    exact = clamped_ball_eigenvalue(2, 1.0)
    errors = [
        abs(clamped_eigenpair(DomainDescriptor("ball", dimension=2, resolution=n)).lambda1 - exact)
        for n in (32, 64, 128)
    ]
    assert errors[-1] / exact < 5e-3
    assert math.log2(errors[1] / errors[2]) >= 1.8


def test_three_dimensional_ball_matches_bessel_oracle():
    desc = DomainDescriptor("ball", dimension=3, radius=1.0, resolution=64)
    assert clamped_eigenpair(desc).lambda1 == pytest.approx(clamped_ball_eigenvalue(3, 1.0), rel=1e-2)


def test_rectangle_positivity_is_informational(square):
    report = verify_positivity(clamped_eigenpair(square))
    assert report.informational


def test_first_eigenpair_rejects_laplacian(disk_disc):
    with pytest.raises(ValidationError):
        first_eigenpair(disk_disc.laplacian, disk_disc.quadrature, grid=disk_disc.grid)


@given(seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_rayleigh_quotient_is_bounded_below(seed):
    desc = DomainDescriptor("ball", dimension=2, resolution=64)
    disc = discretize(desc)
    eig = clamped_eigenpair(desc)
    u = np.random.default_rng(seed).standard_normal(disc.grid.n_interior)
    assert disc.bilaplacian.energy(u) >= eig.lambda1 * float(disc.mass @ u ** 2) * (1 - 1e-9)


def test_exponent_ranges():
    assert embedding_exponent_range(3) == (2.0, math.inf, False)
    assert embedding_exponent_range(5) == (2.0, 10.0, False)
    assert embedding_exponent_range(4)[2]
    assert check_exponent(4, 6.0)
    assert not check_exponent(2, 6.0)
    for dimension, r in ((5, 10.0), (2, 1.5), (2, math.inf)):
        with pytest.raises(ValidationError):
            check_exponent(dimension, r)


def test_sobolev_constant_r2_is_exact(disk, disk_eig):
    estimate = sobolev_constant(disk, 2.0)
    assert estimate.S == pytest.approx(disk_eig.lambda1 ** -0.5, rel=1e-12)
    assert estimate.method == "rayleigh-exact"


@pytest.mark.parametrize("r", [4.0, 6.0])
def test_sobolev_constant_dominates_probes(disk, disk_disc, disk_eig, r):
    estimate = sobolev_constant(disk, r)
    assert estimate.converged
    assert estimate.S == pytest.approx(SAFETY_FACTOR * estimate.ratio)
    assert estimate.ratio >= sobolev_ratio(disk_eig.interior, disk_disc, r) * (1 - 1e-12)
    assert np.max(probe_ratios(disk_disc, r, 50, seed=7)) <= estimate.S


def test_square_r4_constant_dominates_random_probes(square, square_disc):
    estimate = sobolev_constant(square, 4.0, disc=square_disc)
    assert estimate.converged
    assert np.max(probe_ratios(square_disc, 4.0, 1000, seed=11)) <= estimate.S
