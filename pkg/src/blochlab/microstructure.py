"""Periodic two-phase conductivity patterns and their rasterization.

All generated media share a unit background phase (conductivity 1) and a
single high phase ``beta`` on an inclusion set; the pattern repeats on the
sub-lattice of period ``2*pi*eps``.  Membership is decided at cell centers,
so a field rasterized on a grid whose axis counts are divisible by ``1/eps``
is exactly ``eps Y``-periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .grid import PeriodicGrid, _reciprocal_int

_PI = math.pi


@dataclass(frozen=True)
class Constant:
    """Homogeneous medium ``a = a0 * I``."""

    a0: float = 1.0

    def __post_init__(self) -> None:
        if self.a0 < 1.0:
            raise ValueError(f"constant coefficient must be >= 1, got {self.a0}")


@dataclass(frozen=True)
class TwoPhaseInclusion:
    """One centered inclusion of conductivity ``beta`` per ``eps Y`` sub-cell.

    ``rho`` is the inclusion size as a fraction of the sub-cell: squares have
    side ``2*pi*rho`` in pattern coordinates (volume fraction ``rho**d``),
    discs have diameter ``2*pi*rho``.
    """

    eps: float
    beta: float
    rho: float
    shape: str = "square"

    def __post_init__(self) -> None:
        _reciprocal_int(self.eps)
        if self.beta < 1.0:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.shape not in ("square", "disc"):
            raise ValueError(f"shape must be 'square' or 'disc', got {self.shape!r}")


@dataclass(frozen=True)
class FiberLattice:
    """Cylinders of radius ``eps * r_eps`` along the third axis, one per
    ``eps Y`` sub-cell, with conductivity ``beta`` inside and 1 outside.

    In pattern coordinates the fiber cross-section is the disc of radius
    ``r_eps`` centered at ``(pi, pi)``.  ``R`` is the outer radius of the
    matching capacity annulus and is carried here so downstream consumers
    agree on it.
    """

    eps: float
    r_eps: float
    beta: float
    R: float = _PI / 2

    def __post_init__(self) -> None:
        _reciprocal_int(self.eps)
        if not 0.0 < self.r_eps < _PI:
            raise ValueError(f"r_eps must lie in (0, pi), got {self.r_eps}")
        if self.beta < 1.0:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if not self.r_eps < self.R <= _PI:
            raise ValueError(
                f"outer radius R must lie in (r_eps, pi], got R={self.R} "
                f"with r_eps={self.r_eps}"
            )


@dataclass(frozen=True)
class FromFile:
    """Arbitrary per-cell scalar coefficient loaded from a field dump."""

    path: str


MicrostructureSpec = Constant | TwoPhaseInclusion | FiberLattice | FromFile


@dataclass
class CoefficientField:
    """Symmetric positive coefficient per cell.

    ``a`` has shape ``(N,)`` for isotropic media or ``(N, d)`` for per-axis
    diagonal anisotropy; full off-diagonal matrices are out of scope for the
    face-based discretization, whose fluxes only see the diagonal entry along
    each face normal.
    """

    grid: PeriodicGrid
    a: np.ndarray
    mask: np.ndarray | None = None
    inv_eps: int = 1

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=np.float64)
        N = self.grid.num_cells
        if self.a.shape not in ((N,), (N, self.grid.d)):
            raise ValueError(
                f"coefficient shape {self.a.shape} incompatible with grid "
                f"({N} cells, d={self.grid.d})"
            )
        if not np.all(np.isfinite(self.a)) or self.a.min() <= 0:
            raise ValueError("coefficients must be finite and positive")

    @property
    def isotropic(self) -> bool:
        return self.a.ndim == 1

    def axis_values(self, axis: int) -> np.ndarray:
        """Diagonal coefficient entry along ``axis`` for every cell."""
        return self.a if self.isotropic else self.a[:, axis]

    def min_coefficient(self) -> float:
        # diagonal storage: smallest matrix eigenvalue is the smallest entry
        return float(self.a.min())

    def mean_matrix(self) -> np.ndarray:
        """Arithmetic cell-average of the coefficient matrices (d x d)."""
        d = self.grid.d
        if self.isotropic:
            return float(self.a.mean()) * np.eye(d)
        return np.diag(self.a.mean(axis=0))

    def inclusion_fraction(self) -> float:
        if self.mask is None:
            return 0.0
        return float(self.mask.mean())


def unit_pattern(spec: MicrostructureSpec) -> MicrostructureSpec:
    """The same inclusion pattern at pattern scale eps = 1 (one sub-cell)."""
    if isinstance(spec, (TwoPhaseInclusion, FiberLattice)):
        return replace(spec, eps=1.0)
    return spec


def rasterize(spec: MicrostructureSpec, grid: PeriodicGrid) -> CoefficientField:
    """Sample a microstructure at cell centers.

    Raises if a grid axis is not divisible by ``1/eps`` (the field would not
    be exactly ``eps Y``-periodic) or if fewer than 4 cells span the smallest
    feature of the pattern.
    """
    if isinstance(spec, Constant):
        values = np.full(grid.num_cells, float(spec.a0))
        return CoefficientField(grid=grid, a=values, mask=None, inv_eps=1)

    if isinstance(spec, FromFile):
        from . import fieldio

        values, n = fieldio.read_field_dump(spec.path)
        if tuple(n) != grid.n:
            raise ValueError(
                f"field dump resolution {tuple(n)} does not match the "
                f"requested grid {grid.n}"
            )
        if values.min() <= 0:
            raise ValueError("file-backed coefficients must be positive")
        return CoefficientField(grid=grid, a=values, mask=None, inv_eps=1)

    s = _reciprocal_int(spec.eps)
    if isinstance(spec, FiberLattice) and grid.d < 2:
        raise ValueError("fiber lattice needs a 2-d cross-section or a 3-d grid")
    for k, nk in enumerate(grid.n):
        if nk % s != 0:
            raise ValueError(
                f"axis {k} has {nk} cells, not divisible by 1/eps = {s}; "
                f"the sampled field would not be eps*Y-periodic"
            )
    _check_resolution(spec, grid, s)

    # pattern coordinates y = (x / eps) mod 2*pi, evaluated per axis
    mesh = grid.center_mesh()
    pattern = [np.mod(c * s, 2.0 * _PI) for c in mesh]

    if isinstance(spec, TwoPhaseInclusion):
        if spec.shape == "square":
            inside = np.abs(pattern[0] - _PI) < _PI * spec.rho
            for k in range(1, grid.d):
                inside = inside & (np.abs(pattern[k] - _PI) < _PI * spec.rho)
        else:
            r2 = sum((pattern[k] - _PI) ** 2 for k in range(grid.d))
            inside = r2 < (_PI * spec.rho) ** 2
    else:  # FiberLattice: cylinder along the last axis of a 3-d grid
        r2 = (pattern[0] - _PI) ** 2 + (pattern[1] - _PI) ** 2
        inside = r2 < spec.r_eps**2
        if grid.d == 3:
            inside = inside & np.ones_like(pattern[2], dtype=bool)

    mask = np.broadcast_to(inside, grid.shape).ravel().copy()
    values = np.where(mask, float(spec.beta), 1.0)
    return CoefficientField(grid=grid, a=values, mask=mask, inv_eps=s)


def _check_resolution(spec, grid: PeriodicGrid, s: int) -> None:
    """Require at least 4 cells across the smallest feature diameter."""
    if isinstance(spec, TwoPhaseInclusion):
        diameter = 2.0 * _PI * spec.rho / s  # inclusion extent in x units
        axes = range(grid.d)
    else:
        diameter = 2.0 * spec.r_eps / s
        axes = range(2)
    for k in axes:
        across = diameter / grid.h[k]
        if across < 4.0:
            need = math.ceil(4.0 * 2.0 * _PI / diameter)
            raise ValueError(
                f"feature of extent {diameter:.4g} spans only {across:.2f} cells "
                f"along axis {k}; need n >= {need} (at least 4 cells across)"
            )


def radius_for_gamma(eps: float, gamma: float) -> float:
    """Fiber radius at the critical scaling, exp(-1 / (2*pi*eps**2*gamma)).

    With this radius the quantity ``1 / (2*pi*eps**2*|ln r|)`` equals
    ``gamma`` exactly for every ``eps``.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    r = math.exp(-1.0 / (2.0 * _PI * eps * eps * gamma))
    if r >= _PI:
        raise ValueError(f"unphysical fiber radius {r} >= pi")
    return r


def default_beta(eps: float, r_eps: float) -> float:
    """Fiber conductivity ``r_eps**-2 / eps``, so beta * r_eps**2 = 1/eps."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if not 0.0 < r_eps < _PI:
        raise ValueError(f"r_eps must lie in (0, pi), got {r_eps}")
    return r_eps**-2 / eps
