"""Laplace, manufactured Stokes and lid-driven cavity problems."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from dvf.assembly import assemble
from dvf.calculus import div, grad, pi0
from dvf.field import GridFunction, dot, vector_of_values
from dvf.grid import Grid
from dvf.loss import ProblemSystem, discrete_error, reconstruct
from dvf.spaces import (
    CompositeFunctionSpace,
    FunctionSpace,
    TensorFunctionSpace,
    VectorFunctionSpace,
    boundary_mask,
    no_mask,
    pressure_mask,
    remove_dofs,
    select_dofs,
)

PROBLEMS = ("laplace", "stokes-mms", "cavity")


class NoReferenceError(LookupError):
    pass


@dataclass(frozen=True)
class ExactSolution:
    """Vectorised closed-form fields ``f(x, y) -> array of value_shape + x.shape``.

    One evaluator per part of the problem's space, in order.
    """

    fields: tuple[Callable, ...]
    names: tuple[str, ...]

    def sample(self, k: int, grid: Grid) -> GridFunction:
        x, y = grid.points
        return GridFunction(self.fields[k](x, y), grid)

    def tabulate(self, space) -> np.ndarray:
        return vector_of_values(*(self.sample(k, space.grid) for k in range(len(space.parts))))


# Laplace: u = sin(pi x) sin(3 pi y), f = -laplace(u)


def laplace_u(x, y):
    return np.sin(np.pi * x) * np.sin(3 * np.pi * y)


def laplace_f(x, y):
    return 10 * np.pi**2 * np.sin(np.pi * x) * np.sin(3 * np.pi * y)


def grad_grad_form(u, v):
    return dot(grad(u, "+"), grad(v, "+"))


def mass_form(u, v):
    return dot(u, v)


def build_laplace(grid: Grid) -> ProblemSystem:
    P = FunctionSpace(grid)
    B = assemble(grad_grad_form, P, P, radius=1)
    M = assemble(mass_form, P, P, radius=0)
    bc = select_dofs(P, boundary_mask(grid), invert=True)
    B_ = remove_dofs(B, bc)
    M_ = remove_dofs(M, bc)
    f = GridFunction(laplace_f(*grid.points), grid)
    rhs = M_ @ remove_dofs(f.ravel(), bc)
    exact = ExactSolution((laplace_u,), ("u",))
    # trial norm = test norm = grad-grad, so both stability constants are one
    return ProblemSystem("laplace", P, B_, M_, B_, rhs, bc, trial_gram=B_, exact=exact)


# Manufactured Stokes solution; divergence free, vanishing on the boundary


def mms_velocity(x, y):
    ex = np.exp(x)
    u1 = 2 * ex * (x - 1) ** 2 * x**2 * y * (y - 1) * (2 * y - 1)
    u2 = -ex * (x - 1) * x * (x**2 + 3 * x - 2) * (y - 1) ** 2 * y**2
    return np.stack([u1, u2])


def mms_pressure(x, y):
    ex = np.exp(x)
    s = y**2 - y
    poly = 456 + x**2 * (228 - 5 * s) + 2 * x * (s - 228) + 2 * x**3 * (s - 36) + x**4 * (s + 12)
    return -424 + 156 * math.e + y * (y - 1) * (-456 + ex * poly)


def mms_stress(x, y):
    """grad u in [derivative, component] layout."""
    ex = np.exp(x)
    q = x * y * (x - 1) * (y - 1) * (2 * y - 1) * (x**2 + 3 * x - 2)
    du1dx = 2 * ex * q
    du1dy = 2 * ex * x**2 * (x - 1) ** 2 * (6 * y**2 - 6 * y + 1)
    du2dx = -ex * y**2 * (y - 1) ** 2 * (x**4 + 6 * x**3 + x**2 - 8 * x + 2)
    du2dy = -2 * ex * q
    return np.stack([np.stack([du1dx, du2dx]), np.stack([du1dy, du2dy])])


def mms_forcing(x, y):
    """f = -laplace(u) + grad(p), differentiated by hand."""
    ex = np.exp(x)
    y2, y3, y4 = y**2, y**3, y**4
    x2, x3, x4 = x**2, x**3, x**4
    f1 = ex * (
        x4 * (y4 - 6 * y3 + 19 * y2 - 38 * y + 12)
        + x3 * (6 * y4 - 36 * y3 + 18 * y2 + 60 * y - 24)
        + x2 * (y4 - 6 * y3 + 19 * y2 - 38 * y + 12)
        + x * (-8 * y4 + 48 * y3 - 56 * y2 + 16 * y)
        + 2 * y4 - 12 * y3 + 14 * y2 - 4 * y
    )
    lap2 = ex * (
        x4 * (y4 - 2 * y3 + 13 * y2 - 12 * y + 2)
        + x3 * (10 * y4 - 20 * y3 + 34 * y2 - 24 * y + 4)
        + x2 * (19 * y4 - 38 * y3 - 41 * y2 + 60 * y - 10)
        + x * (-6 * y4 + 12 * y3 + 18 * y2 - 24 * y + 4)
        - 6 * y4 + 12 * y3 - 6 * y2
    )
    return np.stack([f1, lap2 + mms_pressure_gradient(x, y)[1]])


def mms_pressure_gradient(x, y):
    ex = np.exp(x)
    s = y**2 - y
    x2, x3, x4 = x**2, x**3, x**4
    dpdx = ex * s * (x4 * (s + 12) + 6 * x3 * (s - 4) + x2 * (s + 12) - 8 * x * s + 2 * s)
    dpdy = 2 * (2 * y - 1) * (
        ex * (x4 * (s + 6) + 2 * x3 * (s - 18) + x2 * (114 - 5 * s) + 2 * x * (s - 114) + 228) - 228
    )
    return np.stack([dpdx, dpdy])


def A_form(sigma, u, p, tau, v, q):
    return dot(-div(sigma, "+") + grad(p, "+"), v) + dot(div(u, "-"), q) + dot(sigma - grad(u, "-"), tau)


def L2_product(sigma, u, p, tau, v, q):
    return dot(sigma, tau) + dot(u, v) + p * q


def AT_product(sigma, u, p, tau, v, q):
    return (
        dot(pi0(div(sigma, "+") - grad(p, "+")), pi0(div(tau, "+") - grad(q, "+")))
        + dot(div(u, "-"), div(v, "-"))
        + dot(sigma + grad(u, "-"), tau + grad(v, "-"))
    )


def stokes_space(grid: Grid) -> CompositeFunctionSpace:
    return CompositeFunctionSpace(
        TensorFunctionSpace(grid, (2, 2)), VectorFunctionSpace(grid, 2), FunctionSpace(grid)
    )


def stokes_bc(W: CompositeFunctionSpace):
    S, U, P = W.parts
    grid = W.grid
    return W.combine_dofs(
        select_dofs(S, no_mask(grid), invert=True),
        select_dofs(U, boundary_mask(grid), invert=True),
        select_dofs(P, pressure_mask(grid), invert=True),
    )


def _stokes_system(grid: Grid, name: str, forcing, lift=None, exact=None, reference=None):
    W = stokes_space(grid)
    S, U, P = W.parts
    A = assemble(A_form, W, W, radius=1)
    M = assemble(L2_product, W, W, radius=0)
    AT = assemble(AT_product, W, W, radius=1)
    bc = stokes_bc(W)
    A_ = remove_dofs(A, bc)
    M_ = remove_dofs(M, bc)
    # the A*-product alone vanishes on constant pressures; adding the plain
    # product gives the graph norm of the adjoint, which is definite
    G_ = remove_dofs(M + AT, bc)
    load = M @ vector_of_values(S.zero_fun, forcing, P.zero_fun)
    if lift is not None:
        load = load - A @ lift
    rhs = remove_dofs(load, bc)
    # constant pressure on the free pressure dofs spans the kernel of A_
    kernel = remove_dofs(vector_of_values(S.zero_fun, U.zero_fun, GridFunction.const(1.0, grid)), bc)
    return ProblemSystem(
        name, W, A_, M_, G_, rhs, bc, lift=lift, kernel=kernel, exact=exact, reference=reference
    )


def build_stokes_manufactured(grid: Grid) -> ProblemSystem:
    f = GridFunction(mms_forcing(*grid.points), grid)
    exact = ExactSolution((mms_stress, mms_velocity, mms_pressure), ("sigma", "u", "p"))
    return _stokes_system(grid, "stokes-mms", f, exact=exact)


def cavity_lift(grid: Grid) -> np.ndarray:
    """Horizontal velocity 1 on the lid ``y = 1``, corners included."""
    W = stokes_space(grid)
    S, U, P = W.parts
    u = np.zeros((2,) + grid.shape)
    u[0, :, -1] = 1.0
    return vector_of_values(S.zero_fun, GridFunction(u, grid), P.zero_fun)


def build_stokes_cavity(grid: Grid) -> ProblemSystem:
    f = GridFunction.zero(grid, (2,))
    return _stokes_system(grid, "cavity", f, lift=cavity_lift(grid), reference="discrete")


BUILDERS = {
    "laplace": build_laplace,
    "stokes-mms": build_stokes_manufactured,
    "cavity": build_stokes_cavity,
}


def build(name: str, grid: Grid) -> ProblemSystem:
    try:
        return BUILDERS[name](grid)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEMS)}") from None


# Error metrics


def _field_weights(space, k: int) -> np.ndarray:
    """0/1 sample weights of part ``k`` used when comparing fields."""
    grid = space.grid
    part = space.parts[k]
    w = np.ones(part.shape + grid.shape)
    if part.shape == (2, 2):
        # backward differences are undefined on the first layer
        w[0, :, 0, :] = 0
        w[1, :, :, 0] = 0
    elif isinstance(space, CompositeFunctionSpace) and part.shape == ():
        w *= pressure_mask(grid).data
    return w


def _centered(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (values - np.sum(values * w) / np.sum(w)) * w


def _field_errors(sys: ProblemSystem, v: np.ndarray, ref: np.ndarray) -> dict:
    space = sys.space
    parts = space.parts
    names = sys.exact.names if sys.exact is not None else (("sigma", "u", "p") if len(parts) == 3 else ("u",))
    offsets = space.offsets
    grid = sys.grid
    h2 = grid.cell_volume
    out = {}
    num2 = den2 = 0.0
    for k, (part, off, name) in enumerate(zip(parts, offsets, names)):
        w = _field_weights(space, k)
        a = v[off : off + part.dim].reshape(w.shape)
        b = ref[off : off + part.dim].reshape(w.shape)
        if name == "p":
            a, b = _centered(a, w), _centered(b, w)
        n2 = h2 * np.sum(((a - b) * w) ** 2)
        d2 = h2 * np.sum((b * w) ** 2)
        out[name] = float(np.sqrt(n2 / d2)) if d2 > 0 else float(np.sqrt(n2))
        out[name + "_abs"] = float(np.sqrt(n2))
        num2 += n2
        den2 += d2
    out["composite"] = float(np.sqrt(num2 / den2)) if den2 > 0 else float(np.sqrt(num2))
    return out


def error_metrics(sys: ProblemSystem, v) -> dict:
    """Relative ``h``-norm errors per field and composite, plus the discrete error.

    ``v`` is a full dof vector; constrained dofs are replaced by boundary data
    first. Pressures are compared up to a constant on the free pressure points,
    stresses where the backward difference is defined.
    """
    ref = sys.reference
    if ref is None:
        raise NoReferenceError(f"problem {sys.name!r} has no exact or reference solution")
    out = _field_errors(sys, reconstruct(sys, v), ref)
    out["discrete"] = discrete_error(sys, v)
    return out
