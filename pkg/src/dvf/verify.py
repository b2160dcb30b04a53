"""Executable statements of the discrete calculus lemmas and the image of div."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from dvf.calculus import (
    diff,
    div,
    facet_normal_fun,
    inner_h,
    integrate,
    integrate_bd,
    norm_h,
    seminorm_grad_h,
    shift,
)
from dvf.field import GridFunction
from dvf.grid import Grid

DEFAULT_SIZES = (3, 4, 5, 8)


@dataclass(frozen=True)
class CheckResult:
    name: str
    grid: str
    samples: int
    worst: float  # largest relative defect (or ratio, for inequalities)
    tol: float
    passed: bool


def _random(grid: Grid, rng, interior: bool = False) -> GridFunction:
    a = rng.standard_normal(grid.shape)
    if interior:
        a[grid.boundary_mask()] = 0.0
    return GridFunction._new(a, grid)


def _rel(a: float, b: float, scale: float) -> float:
    return abs(a - b) / max(scale, np.finfo(float).tiny)


def _max_abs(*fs: GridFunction) -> float:
    return max(float(np.abs(f.data).max()) for f in fs)


def lemma_checks(grid: Grid, pairs: int = 200, rng=None, tol: float = 1e-13) -> list[CheckResult]:
    """Shift adjointness, polarity flip, product rule, zero gradient integral,
    integration by parts (with and without boundary term)."""
    rng = np.random.default_rng(0) if rng is None else rng
    worst = dict.fromkeys(
        ["shift_adjoint", "polarity_flip", "product_rule", "zero_gradient_integral", "integration_by_parts", "boundary_ibp"],
        0.0,
    )
    h = min(grid.h)
    for _ in range(pairs):
        u, v = _random(grid, rng), _random(grid, rng)
        u0, v0 = _random(grid, rng, True), _random(grid, rng, True)
        for ax in (0, 1):
            # shift adjointness: <tau+ u, v> = <u, tau- v>
            a, b = inner_h(shift(u, ax, "+"), v), inner_h(u, shift(v, ax, "-"))
            worst["shift_adjoint"] = max(worst["shift_adjoint"], _rel(a, b, norm_h(u) * norm_h(v)))

            # polarity flip: tau- o D+ = D-
            lhs, rhs = shift(diff(u, ax, "+"), ax, "-"), diff(u, ax, "-")
            d = float(np.abs((lhs - rhs).data).max()) / max(_max_abs(rhs), 1e-300)
            worst["polarity_flip"] = max(worst["polarity_flip"], d)

            # product rule: D+(uv) = D+u v + tau+u D+v, and the backward variant
            scale = 2 * _max_abs(u) * _max_abs(v) / h
            for s in ("+", "-"):
                lhs = diff(u * v, ax, s)
                rhs = diff(u, ax, s) * v + shift(u, ax, s) * diff(v, ax, s)
                d = float(np.abs((lhs - rhs).data).max()) / scale
                worst["product_rule"] = max(worst["product_rule"], d)

            # zero gradient integral: u in D0 => <D+u, 1> = 0
            g = diff(u0, ax, "+")
            mass = integrate(g.map(np.abs))
            worst["zero_gradient_integral"] = max(worst["zero_gradient_integral"], abs(integrate(g)) / mass)

            # summation by parts: uv in D0 => <D+u, v> = -<u, D-v>
            a, b = inner_h(diff(u, ax, "+"), v0), -inner_h(u, diff(v0, ax, "-"))
            scale = norm_h(diff(u, ax, "+")) * norm_h(v0) + norm_h(u) * norm_h(diff(v0, ax, "-"))
            worst["integration_by_parts"] = max(worst["integration_by_parts"], _rel(a, b, scale))

            # with a boundary term, for arbitrary u, v (exact on square grids)
            if grid.nx == grid.ny:
                n = facet_normal_fun(grid, ax)
                a = inner_h(diff(u, ax, "+"), v)
                b = -inner_h(u, diff(v, ax, "-")) + integrate_bd(u * v * n)
                scale = norm_h(diff(u, ax, "+")) * norm_h(v) + norm_h(u) * norm_h(diff(v, ax, "-"))
                worst["boundary_ibp"] = max(worst["boundary_ibp"], _rel(a, b, scale))
    label = f"{grid.nx}x{grid.ny}"
    out = []
    for name, w in worst.items():
        if name == "boundary_ibp" and grid.nx != grid.ny:
            continue
        out.append(CheckResult(name, label, pairs, w, tol, bool(w <= tol)))
    return out


def poincare_check(grid: Grid, samples: int = 1000, rng=None) -> CheckResult:
    """``||u||_h <= 2 ||u||_grad`` for random ``u`` vanishing on the boundary."""
    rng = np.random.default_rng(1) if rng is None else rng
    worst = 0.0
    for _ in range(samples):
        u = _random(grid, rng, True)
        worst = max(worst, norm_h(u) / seminorm_grad_h(u))
    return CheckResult("poincare", f"{grid.nx}x{grid.ny}", samples, worst, 2.0, bool(worst <= 2.0))


def lemma_suite(sizes=DEFAULT_SIZES, pairs: int = 200, poincare_samples: int = 1000, seed: int = 0, tol: float = 1e-13):
    rng = np.random.default_rng(seed)
    results = []
    for n in sizes:
        grid = Grid(*n) if isinstance(n, tuple) else Grid(n)
        results += lemma_checks(grid, pairs, rng, tol)
        results.append(poincare_check(grid, poincare_samples, rng))
    return results


@dataclass(frozen=True)
class ImageReport:
    grid: str
    rank: int
    target_dim: int
    range_in_target: float  # worst constraint violation of a range vector
    target_in_range: float  # worst least-squares residual of a target basis vector
    passed: bool


def div_image_check(grid: Grid, tol: float = 1e-10) -> ImageReport:
    """Range of ``u -> div(u, '-')`` on interior velocities versus
    ``{f : f = 0 on the pressure boundary, <f, 1>_h = 0}``."""
    from dvf.assembly import assemble
    from dvf.spaces import FunctionSpace, VectorFunctionSpace, boundary_mask, pressure_mask, remove_dofs, select_dofs

    U = VectorFunctionSpace(grid, 2)
    P = FunctionSpace(grid)
    U_bc = select_dofs(U, boundary_mask(grid), invert=True)
    # nodal values of div u: the assembled form divided by the point weight
    D = assemble(_div_form, U, P, radius=1).toarray() / grid.cell_volume
    D = remove_dofs(D, trial_dofs=U_bc, test_dofs=[])
    gamma = ~pressure_mask(grid).data.ravel().astype(bool)
    C = np.vstack([np.eye(P.dim)[gamma], np.ones((1, P.dim))])
    target = sla.null_space(C)
    rank = np.linalg.matrix_rank(D, tol=tol * max(1.0, np.abs(D).max()))
    scale = max(1.0, np.abs(D).max())
    range_in_target = float(np.abs(C @ D).max() / scale)
    Q = sla.orth(D, rcond=tol)
    resid = target - Q @ (Q.T @ target)
    target_in_range = float(np.abs(resid).max())
    passed = rank == target.shape[1] and range_in_target <= tol and target_in_range <= 1e-8
    return ImageReport(f"{grid.nx}x{grid.ny}", int(rank), int(target.shape[1]), range_in_target, target_in_range, bool(passed))


def _div_form(u, q):
    return div(u, "-") * q
