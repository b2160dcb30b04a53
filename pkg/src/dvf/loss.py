"""Residual-based robust loss ``r^T G^-1 r`` and its gradient in dof space."""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from dvf.linalg import (
    ConvergenceError,
    SingularMatrixError,
    check_dense_size,
    lu_factor,
    lu_solve,
    smallest_generalized_eig,
)
from dvf.spaces import DofSet, remove_dofs, reinsert_dofs


class ProblemSystem:
    """A constrained discrete problem ready for loss evaluation.

    ``A``, ``M`` and ``G`` are already restricted to the free dofs. ``rhs``
    includes the lifting of non-homogeneous Dirichlet data. ``trial_gram`` is
    the Gram matrix of the norm the error bounds are stated in. ``kernel``, if
    given, spans the null space of ``A`` (the constant pressure on Stokes
    grids); losses cannot see it, so errors are measured modulo it.
    """

    def __init__(
        self,
        name: str,
        space,
        A,
        M,
        G,
        rhs,
        bc: DofSet,
        trial_gram=None,
        lift=None,
        kernel=None,
        exact=None,
        reference=None,
    ):
        self.name = name
        self.space = space
        self.grid = space.grid
        self.A = sp.csr_matrix(A)
        self.M = sp.csr_matrix(M)
        self.G = sp.csr_matrix(G)
        self.rhs = np.asarray(rhs, dtype=np.float64)
        self.bc = bc
        self.trial_gram = self.M if trial_gram is None else sp.csr_matrix(trial_gram)
        self.lift = np.zeros(space.dim) if lift is None else np.asarray(lift, dtype=np.float64)
        self.exact = exact
        self._reference = reference
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.G.shape != (n, n) or self.rhs.shape != (n,):
            raise ValueError("A, G and rhs must share the constrained dimension")
        if bc.parent_dim != space.dim or space.dim - len(bc) != n:
            raise ValueError("dof set does not match the constrained dimension")
        if kernel is not None:
            kernel = np.asarray(kernel, dtype=np.float64)
            kernel = kernel / np.linalg.norm(kernel)
        self.kernel = kernel

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def full_dim(self) -> int:
        return self.space.dim

    @property
    def parts(self):
        return self.space.parts

    @property
    def ncomponents(self) -> int:
        return self.space.ncomponents

    @cached_property
    def G_lu(self):
        return lu_factor(self.G.toarray())

    @cached_property
    def v_star(self) -> np.ndarray:
        """Constrained discrete solution (orthogonal to the kernel, if any)."""
        return direct_solve(self)

    @cached_property
    def reference(self) -> np.ndarray | None:
        """Full reference dof vector: the exact fields, or else the discrete solution."""
        if self.exact is not None:
            return self.exact.tabulate(self.space)
        if self._reference == "discrete":
            return reconstruct(self, reinsert_dofs(self.v_star, self.bc))
        return self._reference

    def __repr__(self) -> str:
        return f"ProblemSystem({self.name!r}, grid={self.grid!r}, dim={self.dim})"


def _check_full(sys: ProblemSystem, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (sys.full_dim,):
        raise ValueError(f"dof vector of shape {v.shape}, expected ({sys.full_dim},)")
    return v


def residual(sys: ProblemSystem, v) -> np.ndarray:
    return sys.A @ remove_dofs(_check_full(sys, v), sys.bc) - sys.rhs


def loss_value(sys: ProblemSystem, v) -> float:
    r = residual(sys, v)
    return float(r @ lu_solve(sys.G_lu, r))


def loss_and_gradient(sys: ProblemSystem, v) -> tuple[float, np.ndarray]:
    """Loss and its gradient in full dof space (zero at constrained dofs)."""
    r = residual(sys, v)
    rep = lu_solve(sys.G_lu, r)
    grad = reinsert_dofs(2.0 * (sys.A.T @ rep), sys.bc)
    return float(r @ rep), grad


def loss_gradient(sys: ProblemSystem, v) -> np.ndarray:
    return loss_and_gradient(sys, v)[1]


def reconstruct(sys: ProblemSystem, v) -> np.ndarray:
    """Full solution represented by ``v``: constrained dofs replaced by the lifting."""
    v = _check_full(sys, v)
    return reinsert_dofs(remove_dofs(v, sys.bc), sys.bc) + sys.lift


def direct_solve(sys: ProblemSystem) -> np.ndarray:
    """Solve the constrained system by sparse LU.

    With a kernel ``z`` the bordered system ``[[A, z], [z^T, 0]]`` picks the
    solution orthogonal to ``z``.
    """
    A = sys.A
    b = sys.rhs
    if sys.kernel is not None:
        z = sys.kernel[:, None]
        A = sp.bmat([[A, sp.csr_matrix(z)], [sp.csr_matrix(z.T), None]], format="csc")
        b = np.append(b, 0.0)
    try:
        x = spla.splu(sp.csc_matrix(A)).solve(b)
    except RuntimeError as exc:
        raise SingularMatrixError(-1) from exc
    if not np.all(np.isfinite(x)):
        raise ConvergenceError("direct solve produced non-finite values")
    return x[: sys.dim]


def _project(sys: ProblemSystem, e: np.ndarray) -> np.ndarray:
    """Remove the kernel component of ``e`` orthogonally in the trial norm."""
    if sys.kernel is None:
        return e
    z = sys.kernel
    Mz = sys.trial_gram @ z
    return e - z * (Mz @ e) / (z @ Mz)


def discrete_error(sys: ProblemSystem, v) -> float:
    """Trial-norm distance of ``v`` to the discrete solution, modulo the kernel."""
    e = _project(sys, remove_dofs(_check_full(sys, v), sys.bc) - sys.v_star)
    return float(np.sqrt(max(e @ (sys.trial_gram @ e), 0.0)))


def stability_constants(sys: ProblemSystem, cap: int | None = None) -> tuple[float, float]:
    """``(alpha_h, mu_h)``: square roots of the extreme eigenvalues of ``A^T G^-1 A`` vs the trial Gram."""
    check_dense_size(sys.dim, cap)
    A = sys.A.toarray()
    c, low = sla.cho_factor(sys.G.toarray())
    W = sla.solve_triangular(c, A, trans="T", lower=low)
    K = W.T @ W
    deflate = None if sys.kernel is None else sys.kernel[:, None]
    lo, hi = smallest_generalized_eig(K, sys.trial_gram.toarray(), deflate=deflate)
    return float(np.sqrt(max(lo, 0.0))), float(np.sqrt(hi))


def error_bounds(sys: ProblemSystem, cap: int | None = None) -> tuple[float, float]:
    """Factors ``(1/mu_h, 1/alpha_h)`` with ``sqrt(L)/mu_h <= err <= sqrt(L)/alpha_h``."""
    alpha, mu = stability_constants(sys, cap)
    if alpha == 0:
        raise ConvergenceError("operator is singular on the trial space", alpha)
    return 1.0 / mu, 1.0 / alpha

