"""Uniform collocation grid on the unit square."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np


class Grid:
    """Points ``(i * hx, j * hy)`` for ``0 <= i <= nx``, ``0 <= j <= ny``.

    Flattened point order is row-major with ``i`` outer and ``j`` inner; every
    vector in the package follows it.
    """

    def __init__(self, nx: int, ny: int | None = None):
        if ny is None:
            ny = nx
        nx, ny = int(nx), int(ny)
        if nx < 2 or ny < 2:
            raise ValueError(f"grid needs at least 2 intervals per axis, got {nx}x{ny}")
        self.nx = nx
        self.ny = ny
        self.h = (1.0 / nx, 1.0 / ny)

    @property
    def n(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def hx(self) -> float:
        return self.h[0]

    @property
    def hy(self) -> float:
        return self.h[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    @property
    def size(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def cell_volume(self) -> float:
        return 1.0 / (self.nx * self.ny)

    @property
    def points(self) -> np.ndarray:
        """Coordinates as an array of shape ``(2, nx + 1, ny + 1)``."""
        i, j = np.indices(self.shape)
        return np.stack([i / self.nx, j / self.ny])

    def point(self, i: int, j: int) -> tuple[float, float]:
        self._check_index(i, j)
        return (i / self.nx, j / self.ny)

    def ravel_index(self, idx: tuple[int, int]) -> int:
        i, j = idx
        self._check_index(i, j)
        return i * (self.ny + 1) + j

    def unravel_index(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.size:
            raise IndexError(f"flat index {k} outside grid of size {self.size}")
        return divmod(int(k), self.ny + 1)

    def is_boundary(self, i: int, j: int) -> bool:
        self._check_index(i, j)
        return i in (0, self.nx) or j in (0, self.ny)

    def boundary_mask(self) -> np.ndarray:
        """Boolean array, True at boundary points."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    def iter_indices(self) -> Iterator[tuple[int, int]]:
        for i in range(self.nx + 1):
            for j in range(self.ny + 1):
                yield (i, j)

    def iter_boundary(self) -> Iterator[tuple[int, int]]:
        for i, j in self.iter_indices():
            if i in (0, self.nx) or j in (0, self.ny):
                yield (i, j)

    def iter_interior(self) -> Iterator[tuple[int, int]]:
        for i in range(1, self.nx):
            for j in range(1, self.ny):
                yield (i, j)

    def facet_normal(self, i: int, j: int) -> np.ndarray:
        # corners get both components
        self._check_index(i, j)
        nx = -1.0 if i == 0 else (1.0 if i == self.nx else 0.0)
        ny = -1.0 if j == 0 else (1.0 if j == self.ny else 0.0)
        return np.array([nx, ny])

    def facet_normals(self) -> np.ndarray:
        """All facet normals as an array of shape ``(2, nx + 1, ny + 1)``."""
        normals = np.zeros((2, *self.shape))
        normals[0, 0, :] = -1.0
        normals[0, -1, :] = 1.0
        normals[1, :, 0] = -1.0
        normals[1, :, -1] = 1.0
        return normals

    def _check_index(self, i: int, j: int) -> None:
        if not (0 <= i <= self.nx and 0 <= j <= self.ny):
            raise IndexError(f"index ({i}, {j}) outside {self.nx}x{self.ny} grid")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.n == other.n

    def __hash__(self) -> int:
        return hash(self.n)

    def __repr__(self) -> str:
        return f"Grid({self.nx}, {self.ny})"
