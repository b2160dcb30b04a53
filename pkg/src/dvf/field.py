"""Functions sampled on grid points."""

from __future__ import annotations

import numbers
from collections.abc import Callable

import numpy as np

from dvf.grid import Grid


class GridFunction:
    """Values on every point of a grid.

    ``data`` has shape ``value_shape + grid.shape``, so raveling it gives the
    component-major, row-major ordering used for dof vectors.

    The constructor accepts either an array of that shape or an index function
    ``fun(i, j) -> value``; use :meth:`from_function` for coordinate functions.
    """

    __array_priority__ = 100

    def __init__(self, values, grid: Grid):
        if callable(values):
            data = _tabulate(values, grid.iter_indices(), grid)
        else:
            data = np.array(values, dtype=np.float64)
            if data.shape[-2:] != grid.shape:
                raise ValueError(
                    f"array of shape {data.shape} does not end with grid shape {grid.shape}"
                )
        data.flags.writeable = False
        self.grid = grid
        self._data = data

    @classmethod
    def _new(cls, data: np.ndarray, grid: Grid) -> GridFunction:
        # trusted fast path: data is freshly computed and owned by the result
        obj = cls.__new__(cls)
        obj.grid = grid
        obj._data = data
        return obj

    @classmethod
    def from_function(cls, f: Callable, grid: Grid) -> GridFunction:
        """Sample ``f(x, y)`` at all grid points."""
        coords = ((i / grid.nx, j / grid.ny) for i, j in grid.iter_indices())
        return cls(_tabulate(f, coords, grid), grid)

    @classmethod
    def from_array(cls, values, grid: Grid) -> GridFunction:
        values = np.asarray(values)
        if values.shape[-2:] != grid.shape:
            raise ValueError(
                f"array of shape {values.shape} does not match grid shape {grid.shape}"
            )
        return cls(values, grid)

    @classmethod
    def const(cls, value, grid: Grid) -> GridFunction:
        value = np.asarray(value, dtype=np.float64)
        return cls(np.broadcast_to(value[..., None, None], value.shape + grid.shape), grid)

    @classmethod
    def zero(cls, grid: Grid, value_shape: tuple[int, ...] = ()) -> GridFunction:
        return cls(np.zeros(tuple(value_shape) + grid.shape), grid)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self._data.shape[:-2]

    @property
    def is_scalar(self) -> bool:
        return self._data.ndim == 2

    def tabulate(self) -> np.ndarray:
        return self._data.copy()

    def ravel(self) -> np.ndarray:
        return self._data.ravel()

    def __call__(self, i: int, j: int):
        self.grid._check_index(i, j)
        val = self._data[..., i, j]
        return val.item() if val.ndim == 0 else val.copy()

    def __getitem__(self, idx) -> GridFunction:
        """Select a value component, e.g. ``sigma[0, 1]`` or ``u[0]``."""
        if not isinstance(idx, tuple):
            idx = (idx,)
        if len(idx) > len(self.value_shape):
            raise IndexError("too many component indices")
        return GridFunction._new(self._data[idx], self.grid)

    def map(self, fun: Callable[[np.ndarray], np.ndarray]) -> GridFunction:
        return GridFunction._new(np.asarray(fun(self._data), dtype=np.float64), self.grid)

    def _binary(self, other, op) -> GridFunction:
        if isinstance(other, GridFunction):
            if other.grid is not self.grid and other.grid != self.grid:
                raise ValueError("grid functions live on different grids")
            a, b = self._data, other._data
            if a.shape != b.shape and not (a.ndim == 2 or b.ndim == 2):
                raise ValueError(
                    f"value shapes {self.value_shape} and {other.value_shape} do not match"
                )
            return GridFunction._new(op(a, b), self.grid)
        if isinstance(other, (int, float)) or isinstance(other, numbers.Real):
            return GridFunction._new(op(self._data, float(other)), self.grid)
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, np.add)

    def __radd__(self, other):
        return self._binary(other, lambda a, b: b + a)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    def __rmul__(self, other):
        return self._binary(other, lambda a, b: b * a)

    def __truediv__(self, other):
        if isinstance(other, GridFunction):
            _check_nonzero(other._data)
        elif isinstance(other, numbers.Real) and other == 0:
            raise ZeroDivisionError("division of a grid function by zero")
        return self._binary(other, np.divide)

    def __rtruediv__(self, other):
        _check_nonzero(self._data)
        return self._binary(other, lambda a, b: b / a)

    def __neg__(self) -> GridFunction:
        return GridFunction._new(-self._data, self.grid)

    def __pos__(self) -> GridFunction:
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridFunction):
            return NotImplemented
        return (
            self.grid == other.grid
            and self._data.shape == other._data.shape
            and bool(np.array_equal(self._data, other._data))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"GridFunction(value_shape={self.value_shape}, grid={self.grid!r})"


def _tabulate(fun, args, grid: Grid) -> np.ndarray:
    values = [np.asarray(fun(*a), dtype=np.float64) for a in args]
    shape = values[0].shape
    for v in values:
        if v.shape != shape:
            raise ValueError(f"inconsistent value shapes {shape} and {v.shape}")
    data = np.stack(values, axis=-1)
    return data.reshape(shape + grid.shape)


def _check_nonzero(data: np.ndarray) -> None:
    if np.any(data == 0):
        raise ZeroDivisionError("grid function has zero samples in the denominator")


def dot(a: GridFunction, b: GridFunction) -> GridFunction:
    """Pointwise full contraction of the value components."""
    if a.grid is not b.grid and a.grid != b.grid:
        raise ValueError("grid functions live on different grids")
    if a.value_shape != b.value_shape:
        raise ValueError(f"cannot contract shapes {a.value_shape} and {b.value_shape}")
    k = len(a.value_shape)
    prod = a.data * b.data
    return GridFunction._new(prod.sum(axis=tuple(range(k))) if k else prod, a.grid)


def lift(fun: Callable[[np.ndarray], np.ndarray]) -> Callable[[GridFunction], GridFunction]:
    """Turn an elementwise numpy function into one acting on grid functions."""

    def lifted(f: GridFunction) -> GridFunction:
        return f.map(fun)

    lifted.__name__ = getattr(fun, "__name__", "lifted")
    return lifted


sin = lift(np.sin)
cos = lift(np.cos)
exp = lift(np.exp)


def sqrt(f: GridFunction) -> GridFunction:
    if np.any(f.data < 0):
        raise ValueError("square root of negative samples")
    return f.map(np.sqrt)


def vector_of_values(*funs: GridFunction) -> np.ndarray:
    """Concatenate raveled tabulations, the layout of composite dof vectors."""
    if not funs:
        return np.zeros(0)
    return np.concatenate([f.ravel() for f in funs])

