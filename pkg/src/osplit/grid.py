"""Uniform tensor grids on intervals and rectangles, grid functions and discrete norms.

Nodes include both endpoints, so an axis with ``n`` nodes on ``[a, b]`` has
spacing ``h = (b - a) / (n - 1)``.  Two-dimensional fields are stored
row-major with ``y`` varying slowest: node ``(i, j)`` lives at ``j * nx + i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["Grid", "Field", "make_uniform_grid", "norm", "grid_norm", "eval_on_grid"]

NORM_KINDS = ("l1", "l2", "linf")


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``shape[k]`` nodes on ``bounds[k]`` along axis k (x first)."""

    shape: tuple[int, ...]
    bounds: tuple[tuple[float, float], ...]

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for n, (a, b) in zip(self.shape, self.bounds))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, k: int) -> np.ndarray:
        a, b = self.bounds[k]
        n = self.shape[k]
        return a + np.arange(n) * ((b - a) / (n - 1))

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Flattened node coordinates, one array per axis, in storage order."""
        if self.dim == 1:
            return (self.axis(0),)
        x, y = np.meshgrid(self.axis(0), self.axis(1), indexing="xy")
        return (x.ravel(), y.ravel())

    def index(self, i: int, j: int = 0) -> int:
        return j * self.shape[0] + i


def make_uniform_grid(shape, bounds) -> Grid:
    """Build a uniform grid.

    Parameters
    ----------
    shape : int or sequence of int
        Node count per axis, boundary nodes included.
    bounds : (float, float) or sequence of them
        Interval per axis.

    Raises
    ------
    ValueError
        If an axis has fewer than 3 nodes or its bounds are not increasing.
    """
    if np.isscalar(shape):
        shape = (int(shape),)
        bounds = (tuple(bounds),)
    shape = tuple(int(n) for n in shape)
    bounds = tuple((float(a), float(b)) for a, b in bounds)
    if len(shape) not in (1, 2) or len(bounds) != len(shape):
        raise ValueError("only 1D and 2D grids are supported, with one bound pair per axis")
    for n, (a, b) in zip(shape, bounds):
        if n < 3:
            raise ValueError(f"need at least 3 nodes per axis, got {n}")
        if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
            raise ValueError(f"degenerate bounds ({a}, {b})")
    return Grid(shape, bounds)


@dataclass(frozen=True)
class Field:
    """Nodal values on a grid.  The value array is read-only."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def as_array(self) -> np.ndarray:
        """Values reshaped to ``(ny, nx)`` in 2D, flat in 1D."""
        if self.grid.dim == 1:
            return self.values
        return self.values.reshape(self.grid.shape[1], self.grid.shape[0])

    def __sub__(self, other: Field) -> Field:
        return Field(self.grid, self.values - other.values)


def grid_norm(values: np.ndarray, grid: Grid, kind: str = "linf") -> float:
    """Discrete norm of raw nodal values; see :func:`norm`."""
    values = np.asarray(values, dtype=float)
    if kind == "linf":
        return float(np.max(np.abs(values))) if values.size else 0.0
    if kind == "l2":
        return float(np.sqrt(grid.cell_volume * np.sum(values**2)))
    if kind == "l1":
        return float(grid.cell_volume * np.sum(np.abs(values)))
    raise ValueError(f"unknown norm {kind!r}; expected one of {NORM_KINDS}")


def norm(field: Field, kind: str = "linf") -> float:
    """Discrete l1, l2 or max norm.

    The l1 and l2 norms weight every node by the product of the axis
    spacings (no half weights at the boundary).
    """
    return grid_norm(field.values, field.grid, kind)


def eval_on_grid(func: Callable[..., object], grid: Grid) -> Field:
    """Sample ``func(x)`` (1D) or ``func(x, y)`` (2D) at the grid nodes."""
    coords = grid.coordinates()
    values = np.broadcast_to(np.asarray(func(*coords), dtype=float), coords[0].shape)
    if not np.all(np.isfinite(values)):
        raise ValueError("function produced non-finite samples on the grid")
    return Field(grid, values)
