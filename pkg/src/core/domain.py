"""
Spatial discretization for QuenchLab.
Builds radial ball grids and 2D rectangle grids, their quadrature, and the
clamped Laplacian / bilaplacian operators acting on interior-node vectors.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.special import gamma

from .exceptions import ValidationError

MIN_RESOLUTION = 8


class DomainKind(str, Enum):
    """Supported shapes of Omega"""
    BALL = "ball"
    RECTANGLE = "rectangle"


def unit_sphere_area(dimension: int) -> float:
    """Surface measure of the unit sphere in R^N"""
    return 2.0 * math.pi ** (dimension / 2.0) / gamma(dimension / 2.0)


@dataclass(frozen=True)
class DomainDescriptor:
    """Shape, size and resolution of the spatial domain"""
    kind: DomainKind
    dimension: int = 2
    radius: float = 1.0
    lx: float = 1.0
    ly: float = 1.0
    resolution: int = 64

    def __post_init__(self):
        try:
            kind = DomainKind(self.kind)
        except ValueError:
            raise ValidationError(f"Unknown domain kind: {self.kind!r}", hypothesis="domain-kind")
        object.__setattr__(self, 'kind', kind)

        if self.dimension < 2:
            raise ValidationError(
                f"Dimension must be at least 2, got {self.dimension}", hypothesis="N >= 2"
            )
        if self.resolution < MIN_RESOLUTION:
            raise ValidationError(
                f"Resolution {self.resolution} is below the minimum of {MIN_RESOLUTION}",
                hypothesis="resolution >= 8"
            )
        if kind is DomainKind.BALL:
            if self.radius <= 0:
                raise ValidationError(f"Radius must be positive, got {self.radius}", hypothesis="R > 0")
        else:
            if self.dimension != 2:
                raise ValidationError(
                    "Rectangle domains are only supported for N = 2",
                    hypothesis="rectangle-dimension"
                )
            if self.lx <= 0 or self.ly <= 0:
                raise ValidationError(
                    f"Side lengths must be positive, got ({self.lx}, {self.ly})",
                    hypothesis="Lx, Ly > 0"
                )

    @property
    def is_ball(self) -> bool:
        return self.kind is DomainKind.BALL

    @property
    def measure(self) -> float:
        """Exact |Omega|"""
        if self.is_ball:
            n = self.dimension
            return math.pi ** (n / 2.0) * self.radius ** n / gamma(n / 2.0 + 1.0)
        return self.lx * self.ly

    @property
    def length_scale(self) -> float:
        """Smallest characteristic length (radius or shorter side)"""
        return self.radius if self.is_ball else min(self.lx, self.ly)

    def describe(self) -> str:
        if self.is_ball:
            return f"ball N={self.dimension} R={self.radius:g} n={self.resolution}"
        return f"rectangle {self.lx:g}x{self.ly:g} n={self.resolution}"


@dataclass(frozen=True, eq=False)
class Grid:
    """Node coordinates with the interior/boundary split"""
    descriptor: DomainDescriptor
    coordinates: np.ndarray
    interior: np.ndarray
    spacing: Tuple[float, ...]
    shape: Tuple[int, ...]

    @property
    def n_nodes(self) -> int:
        return self.coordinates.shape[0]

    @property
    def n_interior(self) -> int:
        return self.interior.size

    @property
    def radii(self) -> np.ndarray:
        """Distance of every node from the centre of the domain"""
        if self.descriptor.is_ball:
            return self.coordinates[:, 0]
        centre = np.array([self.descriptor.lx / 2.0, self.descriptor.ly / 2.0])
        return np.linalg.norm(self.coordinates - centre, axis=1)

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.interior] = False
        return mask

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Full-node values -> interior vector"""
        return np.asarray(values, dtype=float)[self.interior]

    def prolong(self, interior_values: np.ndarray) -> np.ndarray:
        """Interior vector -> full-node values with zero boundary"""
        out = np.zeros(self.n_nodes)
        out[self.interior] = interior_values
        return out


@dataclass(frozen=True, eq=False)
class Field:
    """Real values on every node of a grid"""
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_nodes,):
            raise ValidationError(
                f"Field has {values.size} values but the grid has {self.grid.n_nodes} nodes",
                hypothesis="field-length"
            )
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_interior(cls, grid: Grid, interior_values: np.ndarray) -> 'Field':
        return cls(grid.prolong(interior_values), grid)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> 'Field':
        """Sample func (of r on balls, of x, y on rectangles); boundary forced to zero"""
        if grid.descriptor.is_ball:
            values = np.asarray(func(grid.coordinates[:, 0]), dtype=float)
        else:
            values = np.asarray(func(grid.coordinates[:, 0], grid.coordinates[:, 1]), dtype=float)
        values = np.broadcast_to(values, (grid.n_nodes,)).copy()
        values[grid.boundary_mask] = 0.0
        return cls(values, grid)

    @property
    def interior_values(self) -> np.ndarray:
        return self.grid.restrict(self.values)

    def is_clamped_compatible(self) -> bool:
        """Boundary rows are eliminated: the field must vanish there"""
        return bool(np.all(self.values[self.grid.boundary_mask] == 0.0))


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Positive per-node volume elements"""
    weights: np.ndarray

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """
    Weighted-symmetric operator on interior vectors.

    The operator is W^-1 S with S = stiffness symmetric and W = diag(mass);
    it is self-adjoint in the quadrature inner product.
    """
    kind: str
    stiffness: sparse.csr_matrix
    mass: np.ndarray
    spacing: float
    assembly: str
    clamped_extension: Optional[sparse.csr_matrix] = None

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.stiffness @ u / self.mass

    def energy(self, u: np.ndarray) -> float:
        """u^T S u, i.e. the weighted inner product <A u, u>"""
        return float(u @ (self.stiffness @ u))

    def symmetry_defect(self) -> float:
        diff = self.stiffness - self.stiffness.T
        return float(abs(diff).max()) if diff.nnz else 0.0


@dataclass(frozen=True, eq=False)
class Discretization:
    """Everything assembled for one descriptor"""
    descriptor: DomainDescriptor
    grid: Grid
    quadrature: Quadrature
    laplacian: DiscreteOperator
    bilaplacian: DiscreteOperator

    @property
    def mass(self) -> np.ndarray:
        return self.bilaplacian.mass

    def laplacian_values(self, u: np.ndarray) -> np.ndarray:
        """Clamped Laplacian of an interior vector, on every node"""
        return self.laplacian.clamped_extension @ u


def _flux_matrix(transmissibility: np.ndarray) -> sparse.csr_matrix:
    """Symmetric tridiagonal matrix with off-diagonals t and zero row sums"""
    t = np.asarray(transmissibility, dtype=float)
    main = np.zeros(t.size + 1)
    main[:-1] -= t
    main[1:] -= t
    return sparse.diags([t, main, t], [-1, 0, 1], format='csr')


def _ball_pieces(desc: DomainDescriptor):
    n = desc.resolution
    dim = desc.dimension
    h = desc.radius / n
    omega = unit_sphere_area(dim)

    radii = h * np.arange(n + 1)
    radii[-1] = desc.radius
    faces = h * (np.arange(n) + 0.5)

    # Shell volumes of the control cells; the outer cell is a half shell
    lower = np.clip(radii - h / 2.0, 0.0, None)
    upper = np.clip(radii + h / 2.0, None, desc.radius)
    volumes = omega / dim * (upper ** dim - lower ** dim)

    flux = _flux_matrix(omega * faces ** (dim - 1) / h)
    # Zero flux through r = R encodes dw/dn = 0; dropping the last column encodes w = 0
    extension = sparse.diags(1.0 / volumes) @ flux[:, :n]

    grid = Grid(
        descriptor=desc,
        coordinates=radii[:, None],
        interior=np.arange(n),
        spacing=(h,),
        shape=(n + 1,)
    )
    return grid, volumes, sparse.csr_matrix(extension), h


def _segment_pieces(length: float, n_interior: int):
    h = length / (n_interior + 1)
    volumes = np.full(n_interior + 2, h)
    volumes[0] = volumes[-1] = h / 2.0
    flux = _flux_matrix(np.full(n_interior + 1, 1.0 / h))
    extension = sparse.diags(1.0 / volumes) @ flux[:, 1:-1]
    embedding = sparse.eye(n_interior + 2, n_interior, k=-1)
    nodes = np.linspace(0.0, length, n_interior + 2)
    return nodes, volumes, sparse.csr_matrix(extension), sparse.csr_matrix(embedding), h


def _rectangle_pieces(desc: DomainDescriptor):
    m = desc.resolution
    x, vx, fx, px, hx = _segment_pieces(desc.lx, m)
    y, vy, fy, py, hy = _segment_pieces(desc.ly, m)

    xx, yy = np.meshgrid(x, y, indexing='ij')
    coordinates = np.column_stack([xx.ravel(), yy.ravel()])
    full = np.arange((m + 2) * (m + 2)).reshape(m + 2, m + 2)
    interior = full[1:-1, 1:-1].ravel()

    # u_xx on boundary rows vanishes because u does; corners get zero
    extension = sparse.kron(fx, py) + sparse.kron(px, fy)
    volumes = np.kron(vx, vy)

    grid = Grid(
        descriptor=desc,
        coordinates=coordinates,
        interior=interior,
        spacing=(hx, hy),
        shape=(m + 2, m + 2)
    )
    return grid, volumes, sparse.csr_matrix(extension), max(hx, hy)


@lru_cache(maxsize=32)
def _clamped_pieces(desc: DomainDescriptor):
    if desc.is_ball:
        grid, volumes, extension, h = _ball_pieces(desc)
    else:
        grid, volumes, extension, h = _rectangle_pieces(desc)
    volumes.setflags(write=False)
    logging.debug(f"Built grid for {desc.describe()}: {grid.n_nodes} nodes, {grid.n_interior} unknowns")
    return grid, Quadrature(volumes), extension, h


def _symmetrized(matrix) -> sparse.csr_matrix:
    matrix = sparse.csr_matrix(matrix)
    return sparse.csr_matrix(0.5 * (matrix + matrix.T))


def build_domain(desc: DomainDescriptor) -> Tuple[Grid, Quadrature]:
    """Node coordinates and quadrature for the descriptor"""
    grid, quadrature, _, _ = _clamped_pieces(desc)
    return grid, quadrature


def assemble_laplacian(desc: DomainDescriptor) -> DiscreteOperator:
    """Second-order Laplacian with w = 0 on the boundary (flux form)"""
    grid, quadrature, extension, h = _clamped_pieces(desc)
    mass = quadrature.weights[grid.interior].copy()
    mass.setflags(write=False)
    stiffness = _symmetrized(sparse.diags(mass) @ extension[grid.interior, :])
    return DiscreteOperator(
        kind="laplacian",
        stiffness=stiffness,
        mass=mass,
        spacing=h,
        assembly="flux-form",
        clamped_extension=extension
    )


def assemble_bilaplacian(desc: DomainDescriptor) -> DiscreteOperator:
    """Clamped bilaplacian K = L^T W L, L the clamped Laplacian onto all nodes"""
    grid, quadrature, extension, h = _clamped_pieces(desc)
    mass = quadrature.weights[grid.interior].copy()
    mass.setflags(write=False)
    stiffness = _symmetrized(extension.T @ sparse.diags(quadrature.weights) @ extension)
    return DiscreteOperator(
        kind="bilaplacian",
        stiffness=stiffness,
        mass=mass,
        spacing=h,
        assembly="gram"
    )


@lru_cache(maxsize=16)
def discretize(desc: DomainDescriptor) -> Discretization:
    """Grid, quadrature and both operators; cached per descriptor"""
    grid, quadrature = build_domain(desc)
    return Discretization(
        descriptor=desc,
        grid=grid,
        quadrature=quadrature,
        laplacian=assemble_laplacian(desc),
        bilaplacian=assemble_bilaplacian(desc)
    )


FieldLike = Union[Field, np.ndarray]


def _values(f: FieldLike, q: Quadrature) -> np.ndarray:
    values = f.values if isinstance(f, Field) else np.asarray(f, dtype=float)
    if values.shape != q.weights.shape:
        raise ValidationError(
            f"Field of length {values.size} does not live on a grid with {q.weights.size} nodes",
            hypothesis="same-grid"
        )
    return values


def integrate(f: FieldLike, q: Quadrature) -> float:
    return float(q.weights @ _values(f, q))


def inner(f: FieldLike, g: FieldLike, q: Quadrature) -> float:
    return float(q.weights @ (_values(f, q) * _values(g, q)))


def norm_Lr(f: FieldLike, q: Quadrature, r: float = 2.0) -> float:
    """Quadrature L^r norm; r = inf gives the max norm"""
    if r < 1:
        raise ValidationError(f"L^r norm needs r >= 1, got {r}", hypothesis="r >= 1")
    values = np.abs(_values(f, q))
    if math.isinf(r):
        return float(values.max())
    return float((q.weights @ values ** r) ** (1.0 / r))
