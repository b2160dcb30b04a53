import functools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_diff_grad, generalized_extremes

from dvf.grid import Grid
from dvf.loss import (
    ProblemSystem,
    direct_solve,
    discrete_error,
    error_bounds,
    loss_and_gradient,
    loss_gradient,
    loss_value,
    reconstruct,
    residual,
    stability_constants,
)
from dvf.linalg import DenseSizeError
from dvf.problems import build
from dvf.spaces import reinsert_dofs, remove_dofs


@pytest.fixture(scope="module", params=["laplace", "stokes-mms", "cavity"])
def small(request):
    return build(request.param, Grid(4))


@functools.lru_cache
def _stokes3():
    return build("stokes-mms", Grid(3))


def _solution(sys):
    return reinsert_dofs(direct_solve(sys), sys.bc)


def test_residual_vanishes_at_direct_solution(small):
    r = residual(small, _solution(small))
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(small.rhs)
    assert loss_value(small, _solution(small)) <= 1e-16 * (small.rhs @ small.rhs) + 1e-30


def test_residual_at_zero_and_linearity(small):
    assert np.array_equal(residual(small, np.zeros(small.full_dim)), -small.rhs)
    rng = np.random.default_rng(0)
    v, w = rng.standard_normal((2, small.full_dim))
    lhs = residual(small, v + w) - residual(small, v)
    assert np.allclose(lhs, small.A @ remove_dofs(w, small.bc), rtol=1e-10, atol=1e-12)


def test_dimension_mismatch_rejected(small):
    with pytest.raises(ValueError):
        residual(small, np.zeros(small.dim))


def test_gradient_zero_at_solution_and_on_constrained_dofs(small):
    g = loss_gradient(small, _solution(small))
    assert np.abs(g).max() <= 1e-9 * max(1.0, np.abs(small.rhs).max())
    v = np.random.default_rng(1).standard_normal(small.full_dim)
    g = loss_gradient(small, v)
    assert not g[small.bc.indices].any()
    assert loss_and_gradient(small, v)[0] == loss_value(small, v)


def test_gradient_matches_central_differences(small):
    rng = np.random.default_rng(2)
    v = rng.standard_normal(small.full_dim)
    g = loss_gradient(small, v)
    free = small.bc.complement()
    idx = rng.choice(free, size=min(25, free.size), replace=False)
    fd = central_diff_grad(lambda x: loss_value(small, x), v, idx, step=1e-6)
    scale = np.abs(g).max()
    assert np.abs(fd - g[idx]).max() <= 1e-6 * scale


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.floats(-10, 10).filter(lambda t: abs(t) > 1e-3))
def test_loss_quadratic_scaling_and_nonnegative(seed, t):
    sys = _stokes3()
    rng = np.random.default_rng(seed)
    vs = _solution(sys)
    e = rng.standard_normal(sys.full_dim)
    base = loss_value(sys, vs + e)
    assert base >= 0
    assert loss_value(sys, vs + t * e) == pytest.approx(t * t * base, rel=1e-7)


def test_laplace_loss_is_energy_error():
    sys = build("laplace", Grid(6))
    B = sys.A.toarray()
    vs = direct_solve(sys)
    rng = np.random.default_rng(3)
    for _ in range(10):
        v = rng.standard_normal(sys.full_dim)
        e = remove_dofs(v, sys.bc) - vs
        assert loss_value(sys, v) == pytest.approx(e @ B @ e, rel=1e-10)
        assert np.sqrt(loss_value(sys, v)) == pytest.approx(discrete_error(sys, v), rel=1e-10)


def test_laplace_constants_are_one():
    alpha, mu = stability_constants(build("laplace", Grid(5)))
    assert alpha == pytest.approx(1.0, rel=1e-10) and mu == pytest.approx(1.0, rel=1e-10)


def test_stokes_constants_against_jacobi_oracle():
    sys = build("stokes-mms", Grid(3))
    A, G, M = sys.A.toarray(), sys.G.toarray(), sys.trial_gram.toarray()
    K = A.T @ np.linalg.solve(G, A)
    K = 0.5 * (K + K.T)
    z = sys.kernel
    # restrict to the M-orthogonal complement of the kernel by an explicit basis
    Q, _ = np.linalg.qr(np.column_stack([M @ z, np.eye(sys.dim)]))
    Q = Q[:, 1:]
    lo, hi = generalized_extremes(Q.T @ K @ Q, Q.T @ M @ Q)
    alpha, mu = stability_constants(sys)
    assert alpha == pytest.approx(np.sqrt(lo), rel=1e-6)
    assert mu == pytest.approx(np.sqrt(hi), rel=1e-6)
    lower, upper = error_bounds(sys)
    assert (lower, upper) == pytest.approx((1 / mu, 1 / alpha))


def test_bounds_tight_and_respected_on_samples():
    sys = build("stokes-mms", Grid(4))
    alpha, mu = stability_constants(sys)
    rng = np.random.default_rng(5)
    vs = _solution(sys)
    ratios = []
    for _ in range(50):
        v = vs + rng.standard_normal(sys.full_dim)
        r = np.sqrt(loss_value(sys, v)) / discrete_error(sys, v)
        ratios.append(r)
    assert max(ratios) <= mu * (1 + 1e-6)
    assert min(ratios) >= alpha * (1 - 1e-6)


def test_kernel_direction_invisible():
    sys = build("cavity", Grid(4))
    v = _solution(sys)
    shifted = v + reinsert_dofs(7.0 * sys.kernel, sys.bc)
    assert discrete_error(sys, shifted) <= 1e-10
    assert loss_value(sys, shifted) <= 1e-18 + 1e-12 * loss_value(sys, np.zeros(sys.full_dim))


def test_reconstruct_applies_lift():
    sys = build("cavity", Grid(4))
    full = reconstruct(sys, np.zeros(sys.full_dim))
    assert np.array_equal(full, sys.lift)


def test_stability_constants_respect_cap():
    with pytest.raises(DenseSizeError):
        stability_constants(build("laplace", Grid(6)), cap=10)


def test_system_validation():
    sys = build("laplace", Grid(4))
    with pytest.raises(ValueError):
        ProblemSystem("x", sys.space, sys.A, sys.M, sys.G, sys.rhs[:-1], sys.bc)
