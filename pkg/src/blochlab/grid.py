"""Structured periodic grids on the torus (0, 2*pi)**d.

Cells are axis-aligned boxes enumerated in row-major order; unknowns live at
cell centers ``(j + 1/2) * h_k``.  Periodicity is built into the neighbor
indexing, so every cell has exactly ``2 d`` neighbors and no boundary cases
exist anywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

_MAX_DIM = 3


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform cell-centered grid on (0, 2*pi)**d with periodic wrap."""

    d: int
    n: tuple[int, ...]

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(TWO_PI / nk for nk in self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        """Measure of one cell, prod_k h_k."""
        return float(np.prod(self.h))

    def axis_centers(self, axis: int) -> np.ndarray:
        """Coordinates of cell centers along one axis, shape (n[axis],)."""
        hk = TWO_PI / self.n[axis]
        return (np.arange(self.n[axis]) + 0.5) * hk

    def center_mesh(self) -> tuple[np.ndarray, ...]:
        """Sparse broadcastable meshgrid of cell-center coordinates."""
        axes = [self.axis_centers(k) for k in range(self.d)]
        return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))

    def neighbor(self, axis: int, step: int = 1) -> np.ndarray:
        """Flat index map cell -> periodic neighbor at ``+step`` along ``axis``.

        Composing the +1 and -1 maps along the same axis is the identity.
        """
        if axis < 0 or axis >= self.d:
            raise ValueError(f"axis {axis} out of range for d={self.d}")
        idx = np.arange(self.num_cells, dtype=np.int64).reshape(self.n)
        return np.roll(idx, -step, axis=axis).ravel()


def make_grid(d: int, n: int | tuple[int, ...]) -> PeriodicGrid:
    """Build a validated grid with ``n`` cells per axis (scalar or per-axis)."""
    if d < 1 or d > _MAX_DIM:
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if np.isscalar(n):
        counts = (int(n),) * d
    else:
        counts = tuple(int(nk) for nk in n)
    if len(counts) != d:
        raise ValueError(f"expected {d} axis counts, got {len(counts)}")
    for k, nk in enumerate(counts):
        if nk < 2:
            raise ValueError(f"degenerate axis {k}: need at least 2 cells, got {nk}")
    return PeriodicGrid(d=d, n=counts)


@dataclass
class ScalarGridField:
    """One scalar (real or complex) value per cell, flat row-major storage."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.num_cells,):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid with "
                f"{self.grid.num_cells} cells"
            )

    @property
    def kind(self) -> str:
        return "complex" if np.iscomplexobj(self.values) else "real"

    def mean(self) -> float | complex:
        """Cell-average, equal to the |Y|-normalized integral."""
        m = self.values.mean()
        return complex(m) if np.iscomplexobj(self.values) else float(m)

    def l2_norm(self) -> float:
        """Discrete L2 norm, sqrt(sum |f|^2 * cell_volume)."""
        return float(
            np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2))
        )

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def block_average(f: ScalarGridField, eps: float) -> ScalarGridField:
    """Average ``f`` over the blocks ``2*pi*eps*k + eps*Y`` and tile back.

    ``1/eps`` must be an integer and divide every axis count.  The output is
    constant on each block; the operation is idempotent and preserves the
    global mean exactly up to roundoff.  ``eps = 1`` collapses to the global
    mean on every cell.
    """
    s = _reciprocal_int(eps)
    grid = f.grid
    for k, nk in enumerate(grid.n):
        if nk % s != 0:
            raise ValueError(
                f"axis {k} has {nk} cells, not divisible by 1/eps = {s}"
            )
    block = tuple(nk // s for nk in grid.n)
    # interleave (s, cells-per-block) per axis, reduce the per-block axes
    split_shape = tuple(x for nk, bk in zip((s,) * grid.d, block) for x in (nk, bk))
    arr = f.values.reshape(split_shape)
    reduce_axes = tuple(range(1, 2 * grid.d, 2))
    means = arr.mean(axis=reduce_axes, keepdims=True)
    tiled = np.broadcast_to(means, split_shape).reshape(grid.num_cells)
    return ScalarGridField(grid=grid, values=tiled.copy())


def _reciprocal_int(eps: float) -> int:
    """Validate that eps is the reciprocal of a positive integer, return it."""
    if eps <= 0 or eps > 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    s = round(1.0 / eps)
    if s < 1 or abs(1.0 / eps - s) > 1e-9 * s:
        raise ValueError(f"1/eps must be an integer, got 1/eps = {1.0 / eps}")
    return s
