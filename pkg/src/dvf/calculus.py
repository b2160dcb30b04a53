"""Finite-difference calculus, discrete integrals and inner products.

Differences follow the one-sided convention: a forward difference is zero on
the last layer along its axis, a backward difference is zero on the first
layer. ``grad`` prepends the derivative axis to the value shape and ``div``
contracts it again, so ``div(grad(f, s1), s2)`` is shape-consistent for any
value shape.
"""

from __future__ import annotations

import enum

import numpy as np

from dvf.field import GridFunction, dot

__all__ = [
    "Sign",
    "shift",
    "diff",
    "Dx",
    "Dy",
    "grad",
    "nabla",
    "div",
    "laplacian_h",
    "pi0",
    "integrate",
    "integrate_bd",
    "inner_h",
    "norm_h",
    "inner_grad_h",
    "seminorm_grad_h",
    "product",
    "norm",
    "facet_normal_fun",
]


class Sign(enum.Enum):
    PLUS = "+"
    MINUS = "-"

    @classmethod
    def parse(cls, sign) -> Sign:
        if isinstance(sign, Sign):
            return sign
        try:
            return cls(sign)
        except ValueError:
            raise ValueError(f"sign must be '+' or '-', got {sign!r}") from None


_AXES = {"x": 0, "y": 1, 0: 0, 1: 1}


def _axis(axis) -> int:
    try:
        return _AXES[axis]
    except (KeyError, TypeError):
        raise ValueError(f"axis must be 'x', 'y', 0 or 1, got {axis!r}") from None


def _shift_array(a: np.ndarray, ax: int, sign: Sign) -> np.ndarray:
    # ax counts from the end: -2 is x, -1 is y
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if sign is Sign.PLUS:
        dst[ax], src[ax] = slice(None, -1), slice(1, None)
    else:
        dst[ax], src[ax] = slice(1, None), slice(None, -1)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _diff_array(a: np.ndarray, ax: int, sign: Sign, h: float) -> np.ndarray:
    out = np.empty_like(a)
    if ax == -2:
        d = a[..., 1:, :] - a[..., :-1, :]
        if sign is Sign.PLUS:
            np.divide(d, h, out=out[..., :-1, :])
            out[..., -1, :] = 0
        else:
            np.divide(d, h, out=out[..., 1:, :])
            out[..., 0, :] = 0
    else:
        d = a[..., 1:] - a[..., :-1]
        if sign is Sign.PLUS:
            np.divide(d, h, out=out[..., :-1])
            out[..., -1] = 0
        else:
            np.divide(d, h, out=out[..., 1:])
            out[..., 0] = 0
    return out


def shift(f: GridFunction, axis, sign) -> GridFunction:
    """Shift operator; values shifted in from outside the grid are zero."""
    ax = _axis(axis) - 2
    return GridFunction._new(_shift_array(f.data, ax, Sign.parse(sign)), f.grid)


def diff(f: GridFunction, axis, sign) -> GridFunction:
    """One-sided difference along ``axis``, applied to every value component."""
    a = _axis(axis)
    return GridFunction._new(_diff_array(f.data, a - 2, Sign.parse(sign), f.grid.h[a]), f.grid)


def Dx(f: GridFunction, sign) -> GridFunction:
    return diff(f, 0, sign)


def Dy(f: GridFunction, sign) -> GridFunction:
    return diff(f, 1, sign)


def grad(f: GridFunction, sign) -> GridFunction:
    sign = Sign.parse(sign)
    hx, hy = f.grid.h
    data = np.empty((2,) + f.data.shape)
    data[0] = _diff_array(f.data, -2, sign, hx)
    data[1] = _diff_array(f.data, -1, sign, hy)
    return GridFunction._new(data, f.grid)


nabla = grad


def div(F: GridFunction, sign) -> GridFunction:
    """Divergence contracting the leading value axis (the derivative axis)."""
    if F.is_scalar or F.value_shape[0] != 2:
        raise ValueError(f"div needs a leading value extent of 2, got {F.value_shape}")
    sign = Sign.parse(sign)
    hx, hy = F.grid.h
    data = _diff_array(F.data[0], -2, sign, hx) + _diff_array(F.data[1], -1, sign, hy)
    return GridFunction._new(data, F.grid)


def laplacian_h(f: GridFunction) -> GridFunction:
    return div(grad(f, Sign.MINUS), Sign.PLUS)


def pi0(F: GridFunction) -> GridFunction:
    """Zero all boundary samples."""
    data = F.data.copy()
    data[..., 0, :] = 0
    data[..., -1, :] = 0
    data[..., :, 0] = 0
    data[..., :, -1] = 0
    return GridFunction._new(data, F.grid)


def integrate(f: GridFunction) -> float:
    """``hx * hy`` times the sum over all points; componentwise for non-scalars."""
    s = f.data.sum(axis=(-2, -1)) * f.grid.cell_volume
    return float(s) if f.is_scalar else s


def _boundary_weights(grid) -> np.ndarray:
    hx, hy = grid.h
    w = np.zeros(grid.shape)
    w[:, 0] = w[:, -1] = hx
    w[0, :] = w[-1, :] = hy
    # corners touch an x-normal and a y-normal edge; exact for hx == hy
    for i in (0, -1):
        for j in (0, -1):
            w[i, j] = 0.5 * (hx + hy)
    return w


def integrate_bd(f: GridFunction) -> float:
    """Boundary sum, each boundary point weighted by the spacing along its edge.

    With the facet normals of :meth:`Grid.facet_normals` this makes
    ``integrate(Dx(f, "+") * g) == -integrate(f * Dx(g, "-")) + integrate_bd(f * g * n_x)``
    hold exactly (and the y analogue).
    """
    if not f.is_scalar:
        raise ValueError("boundary integral needs a scalar integrand")
    return float(np.sum(f.data * _boundary_weights(f.grid)))


def facet_normal_fun(grid, axis) -> GridFunction:
    """Component ``axis`` of the facet normal as a scalar grid function."""
    return GridFunction._new(grid.facet_normals()[_axis(axis)], grid)


def inner_h(u: GridFunction, v: GridFunction) -> float:
    return integrate(dot(u, v))


def norm_h(u: GridFunction) -> float:
    return float(np.sqrt(max(inner_h(u, u), 0.0)))


def inner_grad_h(u: GridFunction, v: GridFunction) -> float:
    return inner_h(grad(u, Sign.PLUS), grad(v, Sign.PLUS))


def seminorm_grad_h(u: GridFunction) -> float:
    return float(np.sqrt(max(inner_grad_h(u, u), 0.0)))


def product(u: GridFunction, v: GridFunction, kind: str = "h") -> float:
    if kind == "h":
        return inner_h(u, v)
    if kind == "grad_h":
        return inner_grad_h(u, v)
    raise ValueError(f"unknown product {kind!r}, expected 'h' or 'grad_h'")


def norm(u: GridFunction, kind: str = "h") -> float:
    return float(np.sqrt(max(product(u, u, kind), 0.0)))
