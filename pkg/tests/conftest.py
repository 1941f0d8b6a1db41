"""Shared fixtures: coarse disk and square discretizations and scenario files"""

import textwrap

import numpy as np
import pytest

from src.core.domain import DomainDescriptor, Field, build_domain, discretize
from src.core.evolution import CoefficientProfile, SystemSpec
from src.core.spectrum import clamped_eigenpair


@pytest.fixture(scope="session")
def disk():
    return DomainDescriptor("ball", dimension=2, radius=1.0, resolution=64)


@pytest.fixture(scope="session")
def disk_disc(disk):
    return discretize(disk)


@pytest.fixture(scope="session")
def disk_eig(disk):
    return clamped_eigenpair(disk)


@pytest.fixture(scope="session")
def square():
    return DomainDescriptor("rectangle", lx=1.0, ly=1.0, resolution=24)


@pytest.fixture(scope="session")
def square_disc(square):
    return discretize(square)


def bump_values(desc, amplitude=1.0):
    """amplitude * (1 - (r/R)^2)^2 on a ball, squared product bump on a rectangle"""
    grid, _ = build_domain(desc)
    if desc.is_ball:
        return Field.from_function(grid, lambda r: amplitude * (1 - (r / desc.radius) ** 2) ** 2).values
    return Field.from_function(
        grid,
        lambda x, y: amplitude * (16 * x * (desc.lx - x) * y * (desc.ly - y) / (desc.lx * desc.ly) ** 2) ** 2
    ).values


def make_spec(desc, *, p=3.0, q=2.0, amplitude=1.0, horizon=0.01, coefficients=None, **kwargs):
    coefficients = coefficients or CoefficientProfile.constant()
    u0 = bump_values(desc, amplitude)
    return SystemSpec(
        domain=desc, coefficients=coefficients, p=p, q=q,
        u0=u0, v0=kwargs.pop("v0", u0.copy()), horizon=horizon, **kwargs
    )


@pytest.fixture
def write_config(tmp_path):
    """Write a dedented scenario file and return its path"""
    def write(text, name="scenario.cfg"):
        path = tmp_path / name
        path.write_text(textwrap.dedent(text).lstrip(), encoding="utf-8")
        return path
    return write


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
