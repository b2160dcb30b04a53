import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import generalized_extremes, jacobi_eigvals

from dvf.grid import Grid
from dvf.linalg import (
    ConvergenceError,
    DenseSizeError,
    SingularMatrixError,
    check_dense_size,
    complement_basis,
    infsup_constant,
    lu_factor,
    lu_solve,
    lu_solve_transposed,
    smallest_generalized_eig,
)
from dvf.problems import build


def test_jacobi_oracle_on_known_spectrum():
    # rotation of diag(1, 2, 3, 4) by a fixed orthogonal matrix
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((4, 4)))
    S = Q @ np.diag([1.0, 2.0, 3.0, 4.0]) @ Q.T
    assert np.allclose(jacobi_eigvals(S), [1, 2, 3, 4], atol=1e-13)


def test_lu_identity():
    b = np.array([3.0, -1.0, 2.5])
    F = lu_factor(np.eye(3))
    assert np.array_equal(lu_solve(F, b), b)
    assert F.n == 3


def test_lu_permutation_needs_pivoting():
    F = lu_factor(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.array_equal(lu_solve(F, [1.0, 2.0]), [2.0, 1.0])


def test_lu_spd_residual():
    rng = np.random.default_rng(42)
    X = rng.standard_normal((50, 50))
    A = X @ X.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    F = lu_factor(A)
    x = lu_solve(F, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-10


def test_lu_transposed_and_reuse():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((30, 30)) + 10 * np.eye(30)
    F = lu_factor(sp.csr_matrix(A))
    for _ in range(3):
        b = rng.standard_normal(30)
        assert np.linalg.norm(A.T @ lu_solve_transposed(F, b) - b) <= 1e-12 * np.linalg.norm(b)
        assert np.linalg.norm(A @ lu_solve(F, b) - b) <= 1e-12 * np.linalg.norm(b)
    B = rng.standard_normal((30, 4))
    assert np.allclose(A @ lu_solve(F, B), B, atol=1e-12)


def test_lu_factors_are_read_only():
    F = lu_factor(np.eye(2))
    with pytest.raises(ValueError):
        F.lu[0, 0] = 2.0


def test_singular_pivot_reported():
    A = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularMatrixError) as info:
        lu_factor(A)
    assert info.value.pivot == 1
    with pytest.raises(SingularMatrixError):
        lu_factor(np.zeros((2, 2)))


def test_lu_shape_and_cap():
    with pytest.raises(ValueError):
        lu_factor(np.zeros((2, 3)))
    with pytest.raises(DenseSizeError):
        lu_factor(np.eye(5), cap=4)
    with pytest.raises(DenseSizeError):
        check_dense_size(10**6)


def test_generalized_eig_trivial_examples():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((6, 6))
    B = X @ X.T + 6 * np.eye(6)
    lo, hi = smallest_generalized_eig(B, B)
    assert lo == pytest.approx(1.0, rel=1e-10) and hi == pytest.approx(1.0, rel=1e-10)
    lo, hi = smallest_generalized_eig(np.diag([1.0, 2, 3, 4, 5]), np.eye(5))
    assert (lo, hi) == pytest.approx((1.0, 5.0), rel=1e-12)


def test_generalized_eig_rejects_asymmetric_and_mismatched():
    with pytest.raises(ValueError):
        smallest_generalized_eig(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2))
    with pytest.raises(ValueError):
        smallest_generalized_eig(np.eye(2), np.eye(3))


def test_generalized_eig_indefinite_b_raises():
    with pytest.raises(ConvergenceError):
        smallest_generalized_eig(np.eye(2), np.diag([1.0, -1.0]))


@settings(max_examples=20)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_generalized_eig_against_jacobi_and_scaling(n, seed, scale):
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    A = X + X.T
    B = Y @ Y.T + n * np.eye(n)
    lo, hi = smallest_generalized_eig(A, B)
    olo, ohi = generalized_extremes(A, B)
    tol = 1e-8 * max(abs(olo), abs(ohi))
    assert abs(lo - olo) <= tol and abs(hi - ohi) <= tol
    # congruence by an invertible T leaves the spectrum unchanged; scaling B scales it
    T = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    lo2, hi2 = smallest_generalized_eig(T.T @ A @ T, T.T @ B @ T, symmetry_tol=1e-8)
    assert lo2 == pytest.approx(lo, rel=1e-6, abs=1e-8) and hi2 == pytest.approx(hi, rel=1e-6, abs=1e-8)
    lo3, hi3 = smallest_generalized_eig(A, scale * B)
    assert lo3 == pytest.approx(lo / scale, rel=1e-8) and hi3 == pytest.approx(hi / scale, rel=1e-8)


def test_deflation_excludes_direction():
    A = np.diag([0.0, 2.0, 3.0])
    z = np.array([[1.0], [0.0], [0.0]])
    assert smallest_generalized_eig(A, np.eye(3))[0] == pytest.approx(0.0, abs=1e-14)
    assert smallest_generalized_eig(A, np.eye(3), deflate=z) == pytest.approx((2.0, 3.0))
    Q = complement_basis(z, np.eye(3))
    assert Q.shape == (3, 2) and np.allclose(z.T @ Q, 0)


def test_laplace_operator_against_jacobi_oracle():
    sys = build("laplace", Grid(4, 4))
    A, G, M = sys.A.toarray(), sys.G.toarray(), sys.M.toarray()
    K = A.T @ np.linalg.solve(G, A)
    lo, hi = smallest_generalized_eig(0.5 * (K + K.T), M)
    olo, ohi = generalized_extremes(0.5 * (K + K.T), M)
    assert lo == pytest.approx(olo, rel=1e-8) and hi == pytest.approx(ohi, rel=1e-8)


def test_infsup_positive_and_validation():
    assert infsup_constant(Grid(4)) > 0
    with pytest.raises(ValueError):
        infsup_constant(Grid(4, 5))
    with pytest.raises(ValueError):
        infsup_constant(Grid(2))


def test_infsup_matches_singular_value_oracle():
    # beta = smallest singular value of the whitened divergence restricted
    # off the constant pressure, computed here through an explicit SVD
    from dvf.assembly import assemble
    from dvf.linalg import _div_pressure_form, _grad_grad_form, _mass_form
    from dvf.spaces import FunctionSpace, VectorFunctionSpace, boundary_mask, pressure_mask, remove_dofs, select_dofs

    g = Grid(5)
    U, P = VectorFunctionSpace(g, 2), FunctionSpace(g)
    ub = select_dofs(U, boundary_mask(g), invert=True)
    pb = select_dofs(P, pressure_mask(g), invert=True)
    D = remove_dofs(assemble(_div_pressure_form, U, P, radius=1), trial_dofs=ub, test_dofs=pb).toarray()
    S = remove_dofs(assemble(_grad_grad_form, U, U, radius=1), ub).toarray()
    Mp = remove_dofs(assemble(_mass_form, P, P, radius=0), pb).toarray()
    Ls = np.linalg.cholesky(S)
    m = np.sqrt(Mp[0, 0])  # mass is a multiple of the identity
    C = D @ np.linalg.inv(Ls).T / m
    ones = np.ones(C.shape[0]) / np.sqrt(C.shape[0])
    Pj = np.eye(C.shape[0]) - np.outer(ones, ones)
    sv = np.linalg.svd(Pj @ C, compute_uv=False)
    beta = sorted(sv)[1]  # the constant direction contributes the single zero
    assert infsup_constant(g) == pytest.approx(beta, rel=1e-8)
