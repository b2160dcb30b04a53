"""Assembly of bilinear forms written against Kronecker-delta basis functions.

A form is an ordinary procedure ``integrand(*trial_fields, *test_fields)``
returning a scalar :class:`GridFunction`; its value is the discrete integral of
that integrand. Matrix entries are ``M[j, k] = form(delta_k, delta_j)``.

Sparse assembly probes the form with sums of deltas spread ``2 * radius + 1``
points apart in each direction. If the form couples only points within
``radius`` of each other, every nonzero sample of the resulting integrand can
be attributed to a unique (test dof, trial dof) pair, so a handful of form
evaluations recovers the whole matrix.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from dvf.field import GridFunction, vector_of_values
from dvf.grid import Grid
from dvf.spaces import Argument, CompositeFunctionSpace, FunctionSpace

DEFAULT_RADIUS = 2


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class BilinearForm:
    integrand: Callable[..., GridFunction]
    trial: FunctionSpace | CompositeFunctionSpace
    test: FunctionSpace | CompositeFunctionSpace
    radius: int = DEFAULT_RADIUS
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.trial.grid != self.test.grid:
            raise ValueError("trial and test spaces must share a grid")
        if self.radius < 0:
            raise ValueError("coupling radius must be non-negative")

    @property
    def grid(self) -> Grid:
        return self.trial.grid

    def __call__(self, trial_fields, test_fields) -> float:
        """Discrete integral of the integrand on concrete fields."""
        return float(np.sum(_evaluate(self, trial_fields, test_fields)))

    def on_grid(self, grid: Grid) -> BilinearForm:
        """The same form over spaces of equal value shapes on another grid."""
        return BilinearForm(
            self.integrand, _respace(self.trial, grid), _respace(self.test, grid), self.radius, self.name
        )


def _respace(space, grid: Grid):
    parts = [FunctionSpace(grid, p.shape) for p in space.parts]
    if isinstance(space, CompositeFunctionSpace):
        return CompositeFunctionSpace(*parts)
    return parts[0]


def _space_of(x):
    return x.space if isinstance(x, Argument) else x


def as_form(form, trial=None, test=None, radius: int | None = None) -> BilinearForm:
    if isinstance(form, BilinearForm):
        if radius is not None and radius != form.radius:
            form = BilinearForm(form.integrand, form.trial, form.test, radius, form.name)
        return form
    if trial is None:
        raise ValueError("a bare integrand needs a trial space")
    trial = _space_of(trial)
    test = trial if test is None else _space_of(test)
    return BilinearForm(form, trial, test, DEFAULT_RADIUS if radius is None else radius)


def _evaluate(form: BilinearForm, trial_fields, test_fields) -> np.ndarray:
    """Integrand samples times the cell volume."""
    out = form.integrand(*trial_fields, *test_fields)
    if not isinstance(out, GridFunction) or not out.is_scalar:
        raise AssemblyError("form integrand must return a scalar GridFunction")
    return out.data * form.grid.cell_volume


@dataclass
class _Component:
    part: int
    local: int  # flat component index within the part
    offset: int  # global dof of the component's first point


def _components(space) -> list[_Component]:
    comps = []
    for k, (part, off) in enumerate(zip(space.parts, space.offsets)):
        for c in range(part.ncomponents):
            comps.append(_Component(k, c, off + c * space.grid.size))
    return comps


def _fields(space, comp: _Component, values: np.ndarray) -> list[GridFunction]:
    """Zero fields for every part except ``values`` in one component."""
    grid = space.grid
    out = []
    for k, part in enumerate(space.parts):
        data = np.zeros((part.ncomponents,) + grid.shape)
        if k == comp.part:
            data[comp.local] = values
        out.append(GridFunction._new(data.reshape(part.shape + grid.shape), grid))
    return out


def _owners(n: int, s: int, r: int, a: int) -> np.ndarray:
    """For each index ``0..n``, the member of ``{a, a + s, ...}`` within ``r``, or -1."""
    idx = np.arange(n + 1)
    if s >= n + 1:
        return np.full(n + 1, a)
    d = (idx - a) % s
    owner = np.where(d <= r, idx - d, idx + (s - d))
    owner[(owner < 0) | (owner > n)] = -1
    return owner


@dataclass
class _ColorClass:
    comp: _Component
    indicator: np.ndarray  # 1 at member points
    owner: np.ndarray  # flat point index of the owning member, or -1


def _color_classes(space, radius: int) -> list[_ColorClass]:
    grid = space.grid
    s = 2 * radius + 1
    sx, sy = min(s, grid.nx + 1), min(s, grid.ny + 1)
    classes = []
    for comp in _components(space):
        for a in range(sx):
            for b in range(sy):
                ind = np.zeros(grid.shape)
                ind[a::sx, b::sy] = 1.0
                oi = _owners(grid.nx, sx, radius, a)
                oj = _owners(grid.ny, sy, radius, b)
                owner = np.where(
                    (oi[:, None] >= 0) & (oj[None, :] >= 0),
                    oi[:, None] * (grid.ny + 1) + oj[None, :],
                    -1,
                )
                classes.append(_ColorClass(comp, ind, owner))
    return classes


def _triplets(form: BilinearForm, trial_classes, test_classes):
    rows, cols, vals = [], [], []
    for tc in trial_classes:
        trial_fields = _fields(form.trial, tc.comp, tc.indicator)
        for vc in test_classes:
            test_fields = _fields(form.test, vc.comp, vc.indicator)
            F = _evaluate(form, trial_fields, test_fields)
            nz = F != 0
            if not nz.any():
                continue
            ot, ov = tc.owner[nz], vc.owner[nz]
            if (ot < 0).any() or (ov < 0).any():
                raise AssemblyError(
                    f"form {form.name or form.integrand.__name__!r} couples points further "
                    f"apart than radius {form.radius}"
                )
            rows.append(ov + vc.comp.offset)
            cols.append(ot + tc.comp.offset)
            vals.append(F[nz])
    if not rows:
        return np.zeros(0, np.intp), np.zeros(0, np.intp), np.zeros(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


_checked: set = set()


def check_radius(form: BilinearForm, ncols: int = 6, seed: int = 0) -> None:
    """Compare a few sparse columns on a 4x4 grid with brute-force evaluation.

    Raises :class:`AssemblyError` on mismatch, which means the declared
    radius is too small for the form.
    """
    key = (
        form.integrand,
        tuple(p.shape for p in form.trial.parts),
        tuple(p.shape for p in form.test.parts),
        form.radius,
    )
    if key in _checked:
        return
    small = form.on_grid(Grid(4, 4))
    rng = np.random.default_rng(seed)
    cols = rng.choice(small.trial.dim, size=min(ncols, small.trial.dim), replace=False)
    trial_classes = _color_classes(small.trial, small.radius)
    test_classes = _color_classes(small.test, small.radius)
    grid = small.grid
    for k in cols:
        tc = next(
            c
            for c in trial_classes
            if c.comp.offset <= k < c.comp.offset + grid.size
            and c.indicator.ravel()[k - c.comp.offset] == 1
        )
        rows, cs, vals = _triplets(small, [tc], test_classes)
        sel = cs == k
        sparse_col = np.zeros(small.test.dim)
        np.add.at(sparse_col, rows[sel], vals[sel])
        dense_col = dense_column(small, int(k))
        scale = max(1.0, np.abs(dense_col).max())
        if np.abs(sparse_col - dense_col).max() > 1e-12 * scale:
            raise AssemblyError(
                f"sparse assembly with radius {form.radius} disagrees with brute force "
                f"for {form.name or form.integrand.__name__!r}; increase the radius"
            )
    _checked.add(key)


def assemble(form, trial=None, test=None, radius: int | None = None, check: bool = True) -> sp.csr_matrix:
    """Sparse matrix of ``form`` with rows indexed by test dofs."""
    form = as_form(form, trial, test, radius)
    if check:
        check_radius(form)
    rows, cols, vals = _triplets(
        form, _color_classes(form.trial, form.radius), _color_classes(form.test, form.radius)
    )
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(form.test.dim, form.trial.dim)).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def _basis_fields(space, dof: int) -> list[GridFunction]:
    k, local = (0, dof) if not isinstance(space, CompositeFunctionSpace) else space.locate(dof)
    comp, p = divmod(local, space.grid.size)
    values = np.zeros(space.grid.size)
    values[p] = 1.0
    return _fields(space, _Component(k, comp, 0), values.reshape(space.grid.shape))


def dense_column(form: BilinearForm, k: int, test_basis=None) -> np.ndarray:
    trial_fields = _basis_fields(form.trial, k)
    if test_basis is None:
        test_basis = [_basis_fields(form.test, j) for j in range(form.test.dim)]
    return np.array([np.sum(_evaluate(form, trial_fields, tf)) for tf in test_basis])


def assemble_dense(form, trial=None, test=None) -> np.ndarray:
    """Brute-force assembly over all (trial, test) basis pairs."""
    form = as_form(form, trial, test)
    test_basis = [_basis_fields(form.test, j) for j in range(form.test.dim)]
    return np.column_stack([dense_column(form, k, test_basis) for k in range(form.trial.dim)])


def apply_form(form, trial_value: np.ndarray, trial=None, test=None, radius: int | None = None) -> np.ndarray:
    """Matrix-free ``assemble(form) @ trial_value``."""
    form = as_form(form, trial, test, radius)
    trial_value = np.asarray(trial_value, dtype=np.float64)
    if trial_value.shape != (form.trial.dim,):
        raise ValueError(f"trial vector of shape {trial_value.shape}, expected ({form.trial.dim},)")
    if isinstance(form.trial, CompositeFunctionSpace):
        trial_fields = form.trial.as_functions(trial_value)
    else:
        trial_fields = [form.trial.as_function(trial_value)]
    out = np.zeros(form.test.dim)
    for vc in _color_classes(form.test, form.radius):
        F = _evaluate(form, trial_fields, _fields(form.test, vc.comp, vc.indicator))
        nz = F != 0
        ov = vc.owner[nz]
        if (ov < 0).any():
            raise AssemblyError(f"form couples points further apart than radius {form.radius}")
        np.add.at(out, ov + vc.comp.offset, F[nz])
    return out


def assemble_linear(space, *values: GridFunction) -> np.ndarray:
    """Concatenated nodal values, one field per part of ``space``.

    The load vector of a problem is the mass matrix times this vector.
    """
    space = _space_of(space)
    if len(values) != len(space.parts):
        raise ValueError(f"expected {len(space.parts)} fields, got {len(values)}")
    for f, part in zip(values, space.parts):
        if f.grid != space.grid or f.value_shape != part.shape:
            raise ValueError(f"field of shape {f.value_shape} does not fit part {part.shape}")
    return vector_of_values(*values)


def export_matrix_market(mat, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(mat))
