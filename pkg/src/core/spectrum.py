"""
Clamped-plate spectrum for QuenchLab.
First eigenpair of the discrete bilaplacian, positivity check on balls,
Bessel oracle for the ball, and Sobolev embedding constants.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import splu
from scipy.special import iv, jv

from .domain import (
    DiscreteOperator,
    Discretization,
    DomainDescriptor,
    Field,
    Grid,
    Quadrature,
    discretize,
)
from .exceptions import EigenSolveError, ValidationError

SAFETY_FACTOR = 1.05
DEFAULT_TOL = 1e-10
DEFAULT_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class EigenPair:
    """First clamped eigenvalue and its W-normalized eigenfunction"""
    lambda1: float
    phi1: Field
    residual: float
    iterations: int

    @property
    def interior(self) -> np.ndarray:
        return self.phi1.interior_values


@dataclass(frozen=True)
class PositivityReport:
    min_value: float
    passed: bool
    informational: bool


@dataclass(frozen=True)
class SobolevEstimate:
    """Upper envelope S of ||w||_r / ||Delta w||_2"""
    r: float
    S: float
    method: str
    iterations: int
    converged: bool = True
    ratio: float = float('nan')
    borderline_dimension: bool = False


def _weighted_norm(x: np.ndarray, weights: np.ndarray) -> float:
    return math.sqrt(float(weights @ (x * x)))


def first_eigenpair(
    op: DiscreteOperator,
    q: Quadrature,
    tol: float = DEFAULT_TOL,
    *,
    grid: Grid,
    residual_tol: float = DEFAULT_RESIDUAL_TOL,
    max_iter: int = 1000,
    shift: float = 0.0
) -> EigenPair:
    """
    Shifted inverse power iteration for K x = Lambda W x.

    Stops when the Rayleigh-quotient increment is below tol * Lambda and the
    relative residual ||W^-1 K x - Lambda x||_W / Lambda is below residual_tol.
    """
    if op.kind != "bilaplacian":
        raise ValidationError(f"Expected a bilaplacian operator, got {op.kind}", hypothesis="operator-kind")
    if q.weights.shape != (grid.n_nodes,):
        raise ValidationError("Quadrature and grid do not match", hypothesis="same-grid")

    stiffness = op.stiffness.tocsc()
    weights = op.mass
    try:
        lu = splu((stiffness - shift * sparse.diags(weights)).tocsc())
    except RuntimeError as e:
        logging.error(f"Error factorizing the bilaplacian: {e}")
        raise EigenSolveError(f"Factorization failed: {e}") from e

    x = np.ones(weights.size)
    x /= _weighted_norm(x, weights)
    lam = float(x @ (stiffness @ x))
    residual = math.inf

    for iteration in range(1, max_iter + 1):
        y = lu.solve(weights * x)
        norm = _weighted_norm(y, weights)
        if not np.isfinite(norm) or norm == 0.0:
            raise EigenSolveError(f"Inverse iteration broke down at step {iteration}")
        x = y / norm

        kx = stiffness @ x
        lam_new = float(x @ kx)
        increment = abs(lam_new - lam)
        lam = lam_new
        residual = _weighted_norm(kx / weights - lam * x, weights) / lam

        if increment <= tol * lam and residual <= residual_tol:
            break
    else:
        raise EigenSolveError(
            f"Inverse iteration did not converge in {max_iter} steps "
            f"(last residual {residual:.3e})"
        )

    # Sign convention: positive quadrature-weighted mean
    if weights @ x < 0:
        x = -x

    logging.debug(f"Lambda_1 = {lam:.10g} after {iteration} iterations, residual {residual:.2e}")
    return EigenPair(
        lambda1=lam,
        phi1=Field.from_interior(grid, x),
        residual=residual,
        iterations=iteration
    )


@lru_cache(maxsize=16)
def clamped_eigenpair(desc: DomainDescriptor, tol: float = DEFAULT_TOL) -> EigenPair:
    """First eigenpair for a descriptor, cached"""
    disc = discretize(desc)
    return first_eigenpair(disc.bilaplacian, disc.quadrature, tol, grid=disc.grid)


def verify_positivity(e: EigenPair) -> PositivityReport:
    """Positivity of phi_1 at interior nodes; binding only on balls"""
    min_value = float(e.phi1.interior_values.min())
    return PositivityReport(
        min_value=min_value,
        passed=min_value > 0.0,
        informational=not e.phi1.grid.descriptor.is_ball
    )


def clamped_ball_eigenvalue(dimension: int = 2, radius: float = 1.0) -> float:
    """
    First radial clamped eigenvalue of the ball by shooting on the Bessel
    characteristic equation J_nu(k) I_{nu+1}(k) + J_{nu+1}(k) I_nu(k) = 0,
    nu = N/2 - 1. Returns k^4 / R^4.
    """
    nu = dimension / 2.0 - 1.0

    def characteristic(k: float) -> float:
        return jv(nu, k) * iv(nu + 1, k) + jv(nu + 1, k) * iv(nu, k)

    grid = np.arange(0.5, 40.0, 0.05)
    values = characteristic(grid)
    crossings = np.nonzero(np.sign(values[:-1]) != np.sign(values[1:]))[0]
    if crossings.size == 0:
        raise EigenSolveError(f"No root of the clamped frequency equation for N={dimension}")
    i = crossings[0]
    k = brentq(characteristic, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return (k / radius) ** 4


def embedding_exponent_range(dimension: int) -> Tuple[float, float, bool]:
    """
    Admissible embedding exponents (low, high, flagged) for W_0^{2,2} into L^r.
    The range is [low, high); N = 4 is the borderline case and is flagged.
    """
    if dimension < 4:
        return 2.0, math.inf, False
    if dimension == 4:
        return 2.0, math.inf, True
    return 2.0, 2.0 * dimension / (dimension - 4.0), False


def check_exponent(dimension: int, r: float) -> bool:
    """Raise unless r is admissible; returns True when N = 4 puts r outside the stated cases"""
    low, high, flagged = embedding_exponent_range(dimension)
    if not (low <= r < high) or math.isinf(r):
        raise ValidationError(
            f"Exponent r={r:g} is outside the embedding range [{low:g}, {high:g}) for N={dimension}",
            hypothesis="sobolev-exponent"
        )
    if flagged:
        logging.warning(f"N=4 is the borderline embedding case; treating r={r:g} as admissible")
    return flagged


def sobolev_ratio(w: np.ndarray, disc: Discretization, r: float) -> float:
    """||w||_r / ||Delta_h w||_2 for an interior vector"""
    energy = disc.bilaplacian.energy(w)
    if energy <= 0.0:
        return 0.0
    norm_r = float(disc.mass @ np.abs(w) ** r) ** (1.0 / r)
    return norm_r / math.sqrt(energy)


def sobolev_constant(
    desc: DomainDescriptor,
    r: float,
    *,
    disc: Optional[Discretization] = None,
    eig: Optional[EigenPair] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = 5000
) -> SobolevEstimate:
    """
    Embedding constant S(r) with ||w||_r <= S ||Delta w||_2.

    r = 2 is exact (Lambda_1^{-1/2}). For r > 2, a normalized ascent
    maximizes ||w||_r^r on the ellipsoid w^T K w = 1 starting from phi_1;
    each step solves K z = W |w|^{r-2} w, which never decreases the
    objective because it is convex. The converged ratio is inflated by 5%.
    """
    outside = check_exponent(desc.dimension, r)
    disc = disc or discretize(desc)
    eig = eig or clamped_eigenpair(desc)

    if r == 2.0:
        value = eig.lambda1 ** -0.5
        return SobolevEstimate(
            r=r, S=value, method="rayleigh-exact", iterations=0,
            ratio=value, borderline_dimension=outside
        )

    stiffness = disc.bilaplacian.stiffness.tocsc()
    weights = disc.mass
    lu = splu(stiffness)

    w = eig.interior.copy()
    w /= math.sqrt(float(w @ (stiffness @ w)))
    objective = float(weights @ np.abs(w) ** r)
    converged = False

    for iteration in range(1, max_iter + 1):
        z = lu.solve(weights * np.abs(w) ** (r - 2.0) * w)
        z /= math.sqrt(float(z @ (stiffness @ z)))
        new_objective = float(weights @ np.abs(z) ** r)
        w = z
        if abs(new_objective - objective) <= tol * new_objective:
            objective = new_objective
            converged = True
            break
        objective = new_objective

    if not converged:
        logging.warning(f"Sobolev ascent for r={r:g} stopped after {max_iter} steps without converging")

    ratio = objective ** (1.0 / r)
    return SobolevEstimate(
        r=r,
        S=SAFETY_FACTOR * ratio,
        method="variational-ascent",
        iterations=iteration,
        converged=converged,
        ratio=ratio,
        borderline_dimension=outside
    )


def probe_ratios(disc: Discretization, r: float, n_probes: int, seed: int = 0) -> np.ndarray:
    """
    Ratios ||w||_r / ||Delta w||_2 over random smooth clamped probes
    w = K^-1 W z, z white noise.
    """
    rng = np.random.default_rng(seed)
    lu = splu(disc.bilaplacian.stiffness.tocsc())
    ratios = np.empty(n_probes)
    for i in range(n_probes):
        z = rng.standard_normal(disc.grid.n_interior)
        ratios[i] = sobolev_ratio(lu.solve(disc.mass * z), disc, r)
    return ratios
