"""Function spaces, degree-of-freedom numbering and dof masking.

A dof index is ``component * grid.size + i * (ny + 1) + j`` within a space;
composite spaces stack their parts at cumulative offsets.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from dvf.field import GridFunction
from dvf.grid import Grid


class FunctionSpace:
    def __init__(self, grid: Grid, shape: tuple[int, ...] = ()):
        self.grid = grid
        self.shape = tuple(int(s) for s in shape)

    @property
    def ncomponents(self) -> int:
        return math.prod(self.shape)

    @property
    def dim(self) -> int:
        return self.grid.size * self.ncomponents

    @property
    def zero(self) -> np.ndarray:
        return np.zeros(self.shape)

    @property
    def zero_fun(self) -> GridFunction:
        return GridFunction.zero(self.grid, self.shape)

    @property
    def parts(self) -> tuple[FunctionSpace, ...]:
        return (self,)

    @property
    def offsets(self) -> tuple[int, ...]:
        return (0,)

    def dof(self, component, i: int, j: int) -> int:
        comp = np.ravel_multi_index(tuple(np.atleast_1d(component)), self.shape) if self.shape else 0
        return int(comp) * self.grid.size + self.grid.ravel_index((i, j))

    def dof_to_index(self, dof: int) -> tuple[tuple[int, ...], int, int]:
        """Inverse of :meth:`dof`: ``(component, i, j)``."""
        if not 0 <= dof < self.dim:
            raise IndexError(f"dof {dof} outside space of dimension {self.dim}")
        comp, p = divmod(int(dof), self.grid.size)
        i, j = self.grid.unravel_index(p)
        return tuple(int(c) for c in np.unravel_index(comp, self.shape)) if self.shape else (), i, j

    def as_function(self, vec: np.ndarray) -> GridFunction:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector of length {vec.size} does not match dim {self.dim}")
        return GridFunction(vec.reshape(self.shape + self.grid.shape), self.grid)

    def trial_function(self) -> Argument:
        return Argument(self, "trial")

    def test_function(self) -> Argument:
        return Argument(self, "test")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FunctionSpace) or isinstance(other, CompositeFunctionSpace):
            return NotImplemented
        return self.grid == other.grid and self.shape == other.shape

    def __hash__(self) -> int:
        return hash((self.grid, self.shape))

    def __repr__(self) -> str:
        return f"FunctionSpace({self.grid!r}, shape={self.shape})"


def VectorFunctionSpace(grid: Grid, n: int) -> FunctionSpace:
    return FunctionSpace(grid, (n,))


def TensorFunctionSpace(grid: Grid, shape: tuple[int, ...]) -> FunctionSpace:
    return FunctionSpace(grid, tuple(shape))


class CompositeFunctionSpace:
    """Product of spaces over one grid, e.g. stress x velocity x pressure."""

    def __init__(self, *parts: FunctionSpace):
        if not parts:
            raise ValueError("composite space needs at least one part")
        grid = parts[0].grid
        if any(p.grid != grid for p in parts):
            raise ValueError("all parts of a composite space must share a grid")
        if any(isinstance(p, CompositeFunctionSpace) for p in parts):
            raise ValueError("nested composite spaces are not supported")
        self.grid = grid
        self._parts = tuple(parts)
        self._offsets = tuple(int(x) for x in np.cumsum([0] + [p.dim for p in parts])[:-1])

    @property
    def parts(self) -> tuple[FunctionSpace, ...]:
        return self._parts

    @property
    def offsets(self) -> tuple[int, ...]:
        return self._offsets

    @property
    def dim(self) -> int:
        return sum(p.dim for p in self._parts)

    @property
    def ncomponents(self) -> int:
        return sum(p.ncomponents for p in self._parts)

    def locate(self, dof: int) -> tuple[int, int]:
        """Map a global dof to ``(part index, local dof)``."""
        if not 0 <= dof < self.dim:
            raise IndexError(f"dof {dof} outside space of dimension {self.dim}")
        k = int(np.searchsorted(self._offsets, dof, side="right")) - 1
        return k, int(dof) - self._offsets[k]

    def split(self, vec: np.ndarray) -> list[np.ndarray]:
        vec = np.asarray(vec)
        if vec.shape[0] != self.dim:
            raise ValueError(f"vector of length {vec.shape[0]} does not match dim {self.dim}")
        return [vec[o : o + p.dim] for o, p in zip(self._offsets, self._parts)]

    def as_functions(self, vec: np.ndarray) -> list[GridFunction]:
        return [p.as_function(v) for p, v in zip(self._parts, self.split(vec))]

    def combine_dofs(self, *dofsets: DofSet) -> DofSet:
        if len(dofsets) != len(self._parts):
            raise ValueError(f"expected {len(self._parts)} dof sets, got {len(dofsets)}")
        chunks = []
        for ds, off, part in zip(dofsets, self._offsets, self._parts):
            if ds.parent_dim != part.dim:
                raise ValueError("dof set does not belong to the matching part")
            chunks.append(ds.indices + off)
        return DofSet(np.concatenate(chunks) if chunks else [], self.dim)

    def trial_function(self) -> Argument:
        return Argument(self, "trial")

    def test_function(self) -> Argument:
        return Argument(self, "test")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CompositeFunctionSpace):
            return NotImplemented
        return self._parts == other._parts

    def __hash__(self) -> int:
        return hash(self._parts)

    def __repr__(self) -> str:
        return f"CompositeFunctionSpace{self._parts!r}"


@dataclass(frozen=True)
class Argument:
    """Placeholder for a trial or test function; carries only its space."""

    space: FunctionSpace | CompositeFunctionSpace
    role: str

    @property
    def components(self) -> tuple[Argument, ...]:
        return tuple(Argument(p, self.role) for p in self.space.parts)


class DofSet:
    """Sorted, duplicate-free global dof indices of a parent space."""

    def __init__(self, indices, parent_dim: int):
        idx = np.unique(np.asarray(indices, dtype=np.intp).ravel())
        if idx.size and (idx[0] < 0 or idx[-1] >= parent_dim):
            raise ValueError(f"dof indices must lie in [0, {parent_dim})")
        idx.flags.writeable = False
        self.indices = idx
        self.parent_dim = int(parent_dim)

    def __len__(self) -> int:
        return self.indices.size

    def __iter__(self):
        return iter(self.indices.tolist())

    def __contains__(self, dof) -> bool:
        k = np.searchsorted(self.indices, dof)
        return bool(k < self.indices.size and self.indices[k] == dof)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DofSet):
            return NotImplemented
        return self.parent_dim == other.parent_dim and np.array_equal(self.indices, other.indices)

    __hash__ = None

    def complement(self) -> np.ndarray:
        keep = np.ones(self.parent_dim, dtype=bool)
        keep[self.indices] = False
        return np.flatnonzero(keep)

    def to_json(self) -> str:
        return json.dumps({"parent_dim": self.parent_dim, "indices": self.indices.tolist()})

    @classmethod
    def from_json(cls, text: str) -> DofSet:
        obj = json.loads(text)
        return cls(obj["indices"], obj["parent_dim"])

    def __repr__(self) -> str:
        return f"DofSet({len(self)} of {self.parent_dim})"


def select_dofs(
    space: FunctionSpace,
    mask: GridFunction | Callable[[int, int], object],
    invert: bool = False,
) -> DofSet:
    """Dofs at points where ``mask`` is 1 (0 with ``invert``), for every component."""
    if isinstance(space, CompositeFunctionSpace):
        raise TypeError("select dofs per part, then use combine_dofs")
    if isinstance(mask, GridFunction):
        if mask.grid != space.grid:
            raise ValueError("mask lives on a different grid")
        if not mask.is_scalar:
            raise ValueError("mask must be scalar valued")
        values = mask.data
        if not np.all((values == 0) | (values == 1)):
            raise ValueError("mask values must be 0 or 1")
        flags = values == 1
    else:
        flags = np.array([bool(mask(i, j)) for i, j in space.grid.iter_indices()]).reshape(
            space.grid.shape
        )
    if invert:
        flags = ~flags
    points = np.flatnonzero(flags.ravel())
    size = space.grid.size
    dofs = (np.arange(space.ncomponents)[:, None] * size + points[None, :]).ravel()
    return DofSet(dofs, space.dim)


def boundary_mask(grid: Grid) -> GridFunction:
    """0 on boundary points, 1 inside."""
    return GridFunction((~grid.boundary_mask()).astype(float), grid)


def pressure_mask(grid: Grid) -> GridFunction:
    """0 on the left edge, bottom edge and top-right corner, 1 elsewhere."""
    m = np.ones(grid.shape)
    m[0, :] = 0
    m[:, 0] = 0
    m[-1, -1] = 0
    return GridFunction(m, grid)


def no_mask(grid: Grid) -> GridFunction:
    return GridFunction(np.ones(grid.shape), grid)


def remove_dofs(obj, dofs: DofSet | Sequence[int] | None = None, *, trial_dofs=None, test_dofs=None):
    """Delete the listed rows (and columns, for square matrices).

    Rectangular matrices take ``trial_dofs`` (columns) and ``test_dofs`` (rows).
    """
    if dofs is None:
        if trial_dofs is None or test_dofs is None:
            raise ValueError("give dofs, or both trial_dofs and test_dofs")
        rows = _keep(test_dofs, obj.shape[0])
        cols = _keep(trial_dofs, obj.shape[1])
        if sp.issparse(obj):
            return sp.csr_matrix(obj)[rows][:, cols]
        return np.asarray(obj)[np.ix_(rows, cols)]
    keep = _keep(dofs, obj.shape[0])
    if sp.issparse(obj):
        obj = sp.csr_matrix(obj)
        if obj.shape[0] != obj.shape[1]:
            raise ValueError("only square matrices can have dofs removed")
        return obj[keep][:, keep]
    obj = np.asarray(obj)
    if obj.ndim == 1:
        return obj[keep]
    if obj.ndim == 2:
        if obj.shape[0] != obj.shape[1]:
            raise ValueError("only square matrices can have dofs removed")
        return obj[np.ix_(keep, keep)]
    raise ValueError("expected a vector or a matrix")


def reinsert_dofs(vec, dofs: DofSet, fill: float = 0.0) -> np.ndarray:
    """Right inverse of :func:`remove_dofs` on vectors."""
    vec = np.asarray(vec)
    if not isinstance(dofs, DofSet):
        raise TypeError("reinsert_dofs needs a DofSet to know the parent dimension")
    keep = dofs.complement()
    if vec.shape[0] != keep.size:
        raise ValueError(f"vector of length {vec.shape[0]} does not match reduced dim {keep.size}")
    out = np.full((dofs.parent_dim,) + vec.shape[1:], fill, dtype=np.result_type(vec, float))
    out[keep] = vec
    return out


def _keep(dofs, n: int) -> np.ndarray:
    if isinstance(dofs, DofSet):
        if dofs.parent_dim != n:
            raise ValueError(f"dof set of dimension {dofs.parent_dim} applied to size {n}")
        return dofs.complement()
    return DofSet(dofs, n).complement()
