"""Dense LU with factor reuse, generalized eigenvalue extremes, inf-sup constant."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from dvf.assembly import assemble
from dvf.calculus import div, grad
from dvf.field import dot
from dvf.spaces import (
    FunctionSpace,
    VectorFunctionSpace,
    boundary_mask,
    pressure_mask,
    remove_dofs,
    select_dofs,
)

DENSE_CAP = 20000


class NumericalError(ArithmeticError):
    """Base class for singular systems and failed eigen computations."""


class SingularMatrixError(NumericalError):
    def __init__(self, pivot: int):
        super().__init__(f"matrix is singular: pivot {pivot} is exactly zero")
        self.pivot = pivot


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class DenseSizeError(ValueError):
    def __init__(self, n: int, cap: int):
        super().__init__(f"dense dimension {n} exceeds the cap of {cap}")
        self.n = n
        self.cap = cap


def as_dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)


def check_dense_size(n: int, cap: int | None = None) -> None:
    cap = DENSE_CAP if cap is None else cap
    if n > cap:
        raise DenseSizeError(n, cap)


@dataclass(frozen=True)
class LuFactorization:
    """Packed LU factors with the LAPACK pivot vector."""

    lu: np.ndarray
    piv: np.ndarray

    @property
    def n(self) -> int:
        return self.lu.shape[0]


def lu_factor(A, cap: int | None = None) -> LuFactorization:
    A = as_dense(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"LU needs a square matrix, got shape {A.shape}")
    check_dense_size(A.shape[0], cap)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    zero = np.flatnonzero(np.diag(lu) == 0)
    if zero.size:
        raise SingularMatrixError(int(zero[0]))
    lu.flags.writeable = False
    return LuFactorization(lu, piv)


def lu_solve(F: LuFactorization, b) -> np.ndarray:
    return sla.lu_solve((F.lu, F.piv), np.asarray(b, dtype=np.float64), trans=0, check_finite=False)


def lu_solve_transposed(F: LuFactorization, b) -> np.ndarray:
    """Solve ``A.T x = b`` with the factors of ``A``."""
    return sla.lu_solve((F.lu, F.piv), np.asarray(b, dtype=np.float64), trans=1, check_finite=False)


def complement_basis(Z: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``{x : Z.T B x = 0}``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64).T).T
    return sla.null_space((B @ Z).T)


def smallest_generalized_eig(A, B, deflate=None, symmetry_tol: float = 1e-10) -> tuple[float, float]:
    """Extreme eigenvalues ``(lam_min, lam_max)`` of ``A x = lam B x``.

    ``A`` symmetric, ``B`` symmetric positive definite. ``deflate`` holds
    columns spanning a subspace to exclude; the problem is restricted to its
    ``B``-orthogonal complement (used for the constant pressure mode).
    """
    A, B = as_dense(A), as_dense(B)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrices of shapes {A.shape} and {B.shape} are not a square pair")
    for name, X in (("A", A), ("B", B)):
        scale = max(np.abs(X).max(), np.finfo(float).tiny)
        if np.abs(X - X.T).max() > symmetry_tol * scale:
            raise ValueError(f"{name} is not symmetric")
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    if deflate is not None:
        Q = complement_basis(deflate, B)
        A = Q.T @ A @ Q
        B = Q.T @ B @ Q
    try:
        # the full spectrum is robust to clustered extremes, where the subset
        # drivers can fail (e.g. A == B)
        lam = sla.eigh(A, B, eigvals_only=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"generalized eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise ConvergenceError("generalized eigensolver returned non-finite values")
    return float(lam[0]), float(lam[-1])


def infsup_constant(grid) -> float:
    """Discrete inf-sup constant of the backward divergence.

    Velocities in the interior (the grad-grad norm), pressures vanishing on the
    left edge, bottom edge and top-right corner (the plain discrete norm), with
    the constant pressure mode deflated.
    """
    if grid.nx != grid.ny:
        raise ValueError("inf-sup study needs a square grid")
    if grid.nx < 3:
        raise ValueError("inf-sup study needs N >= 3")
    U = VectorFunctionSpace(grid, 2)
    P = FunctionSpace(grid)
    U_bc = select_dofs(U, boundary_mask(grid), invert=True)
    P_bc = select_dofs(P, pressure_mask(grid), invert=True)

    Bdiv = assemble(_div_pressure_form, U, P, radius=1)
    S = assemble(_grad_grad_form, U, U, radius=1)
    Mp = assemble(_mass_form, P, P, radius=0)

    Bdiv = remove_dofs(Bdiv, trial_dofs=U_bc, test_dofs=P_bc).toarray()
    S = remove_dofs(S, U_bc).toarray()
    Mp = remove_dofs(Mp, P_bc).toarray()

    R = Bdiv @ sla.cho_solve(sla.cho_factor(S), Bdiv.T)
    ones = np.ones(Mp.shape[0])
    lam, _ = smallest_generalized_eig(R, Mp, deflate=ones[:, None])
    if lam <= 0:
        raise ConvergenceError("inf-sup eigenvalue is not positive", lam)
    return float(np.sqrt(lam))


def _div_pressure_form(u, q):
    return div(u, "-") * q


def _grad_grad_form(u, v):
    return dot(grad(u, "+"), grad(v, "+"))


def _mass_form(p, q):
    return p * q
