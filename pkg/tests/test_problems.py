import numpy as np
import pytest
import scipy.sparse as sp

from dvf.calculus import div, grad, inner_h
from dvf.field import GridFunction
from dvf.grid import Grid
from dvf.loss import direct_solve, reconstruct
from dvf.problems import (
    AT_product,
    A_form,
    L2_product,
    NoReferenceError,
    PROBLEMS,
    build,
    cavity_lift,
    error_metrics,
    laplace_f,
    laplace_u,
    mms_forcing,
    mms_pressure,
    mms_pressure_gradient,
    mms_stress,
    mms_velocity,
    stokes_space,
)
from dvf.assembly import assemble
from dvf.spaces import reinsert_dofs

H = 1e-3


def _d1(f, x, y, axis, h=H):
    # fourth-order central first derivative
    e = (h, 0.0) if axis == 0 else (0.0, h)
    p = lambda k: f(x + k * e[0], y + k * e[1])  # noqa: E731
    return (-p(2) + 8 * p(1) - 8 * p(-1) + p(-2)) / (12 * h)


def _d2(f, x, y, axis, h=H):
    e = (h, 0.0) if axis == 0 else (0.0, h)
    p = lambda k: f(x + k * e[0], y + k * e[1])  # noqa: E731
    return (-p(2) + 16 * p(1) - 30 * p(0) + 16 * p(-1) - p(-2)) / (12 * h * h)


@pytest.fixture(scope="module")
def offgrid():
    rng = np.random.default_rng(11)
    pts = rng.uniform(0.01, 0.99, (2, 1000))
    return pts[0], pts[1]


def test_laplace_forcing_by_differences(offgrid):
    x, y = offgrid
    lap = _d2(laplace_u, x, y, 0) + _d2(laplace_u, x, y, 1)
    assert np.abs(-lap - laplace_f(x, y)).max() <= 1e-8 * np.abs(laplace_f(x, y)).max()


def test_mms_velocity_divergence_free(offgrid):
    x, y = offgrid
    S = mms_stress(x, y)
    assert np.abs(S[0, 0] + S[1, 1]).max() <= 1e-12
    u1 = lambda a, b: mms_velocity(a, b)[0]  # noqa: E731
    u2 = lambda a, b: mms_velocity(a, b)[1]  # noqa: E731
    assert np.abs(_d1(u1, x, y, 0) + _d1(u2, x, y, 1)).max() <= 1e-9


def test_mms_stress_is_velocity_gradient(offgrid):
    x, y = offgrid
    S = mms_stress(x, y)
    for c in range(2):
        uc = lambda a, b, c=c: mms_velocity(a, b)[c]  # noqa: E731
        for d in range(2):
            assert np.abs(S[d, c] - _d1(uc, x, y, d)).max() <= 1e-9


def test_mms_forcing_two_oracles_agree(offgrid):
    x, y = offgrid
    f = mms_forcing(x, y)
    for c in range(2):
        uc = lambda a, b, c=c: mms_velocity(a, b)[c]  # noqa: E731
        fd = -(_d2(uc, x, y, 0) + _d2(uc, x, y, 1)) + _d1(mms_pressure, x, y, c)
        assert np.abs(fd - f[c]).max() <= 1e-8 * max(1.0, np.abs(f[c]).max())
    gp = mms_pressure_gradient(x, y)
    for c in range(2):
        assert np.abs(gp[c] - _d1(mms_pressure, x, y, c)).max() <= 1e-8 * np.abs(gp[c]).max()


def test_mms_fields_vanish_on_boundary():
    t = np.linspace(0, 1, 41)
    z, o = np.zeros_like(t), np.ones_like(t)
    for x, y in ((t, z), (t, o), (z, t), (o, t)):
        assert np.abs(mms_velocity(x, y)).max() <= 1e-15


def test_laplace_system_shapes():
    sys = build("laplace", Grid(6))
    assert sys.dim == 25 and sys.full_dim == 49
    assert (sys.G != sys.A).nnz == 0
    rng = np.random.default_rng(0)
    G = sys.G.toarray()
    for _ in range(100):
        x = rng.standard_normal(sys.dim)
        assert x @ G @ x > 0


@pytest.mark.parametrize("name", ["stokes-mms", "cavity"])
def test_stokes_system_structure(name):
    g = Grid(5)
    sys = build(name, g)
    # 4 stress + 2 interior velocity + pressure off the pressure boundary
    assert sys.dim == 4 * 36 + 2 * 16 + (36 - 12)
    G = sys.G.toarray()
    assert np.abs(G - G.T).max() == 0
    assert np.linalg.eigvalsh(G).min() > 0
    # the kernel vector is annihilated from both sides
    z = sys.kernel
    assert np.abs(sys.A @ z).max() <= 1e-12 * abs(sys.A).max()
    assert np.abs(sys.A.T @ z).max() <= 1e-12 * abs(sys.A).max()
    assert abs(z @ sys.rhs) <= 1e-12 * np.abs(sys.rhs).max()


def test_adjoint_product_psd_but_blind_to_constant_pressure():
    g = Grid(4)
    W = stokes_space(g)
    AT = assemble(AT_product, W, W, radius=1).toarray()
    assert np.abs(AT - AT.T).max() <= 1e-12 * np.abs(AT).max()
    lam = np.linalg.eigvalsh(AT)
    assert lam.min() >= -1e-10 * lam.max()
    # a constant pressure has zero gradient, so the adjoint product does not see it
    c = np.zeros(W.dim)
    c[W.offsets[2]:] = 1.0
    assert np.abs(AT @ c).max() <= 1e-12 * np.abs(AT).max()


def test_mass_is_block_diagonal_identity():
    g = Grid(3)
    W = stokes_space(g)
    M = assemble(L2_product, W, W, radius=0)
    assert (M - g.cell_volume * sp.identity(W.dim)).nnz == 0


def test_matrix_level_integration_by_parts():
    g = Grid(6)
    rng = np.random.default_rng(2)
    u = rng.standard_normal((2,) + g.shape)
    u[:, 0, :] = u[:, -1, :] = u[:, :, 0] = u[:, :, -1] = 0
    q = rng.standard_normal(g.shape)
    W = stokes_space(g)
    Af = assemble(A_form, W, W, radius=1)
    x = np.concatenate([np.zeros(4 * g.size), u.ravel(), np.zeros(g.size)])
    y = np.concatenate([np.zeros(6 * g.size), q.ravel()])
    U, Q = GridFunction(u, g), GridFunction(q, g)
    lhs = y @ (Af @ x)
    assert lhs == pytest.approx(inner_h(div(U, "-"), Q), rel=1e-12)
    assert lhs == pytest.approx(-inner_h(U, grad(Q, "+")), rel=1e-12)


def test_cavity_lift():
    g = Grid(30)
    lift = cavity_lift(g)
    W = stokes_space(g)
    nz = np.flatnonzero(lift)
    assert nz.size == 31
    assert np.all((nz >= W.offsets[1]) & (nz < W.offsets[1] + g.size))
    comp, i, j = zip(*(W.parts[1].dof_to_index(k - W.offsets[1]) for k in nz))
    assert set(j) == {30} and set(i) == set(range(31))


def test_cavity_rhs_linear_in_lift_and_vortex_direction():
    from dvf.problems import _stokes_system

    g = Grid(8)
    f0 = GridFunction.zero(g, (2,))
    r1 = _stokes_system(g, "c", f0, lift=cavity_lift(g)).rhs
    r2 = _stokes_system(g, "c", f0, lift=2 * cavity_lift(g)).rhs
    assert np.allclose(r2, 2 * r1, rtol=1e-15, atol=0)
    sys = build("cavity", g)
    full = reconstruct(sys, reinsert_dofs(direct_solve(sys), sys.bc))
    u = full[sys.space.offsets[1] : sys.space.offsets[2]].reshape(2, *g.shape)
    assert u[0, 4, 4] < 0


def test_unknown_problem():
    with pytest.raises(ValueError):
        build("heat", Grid(4))
    assert set(PROBLEMS) == {"laplace", "stokes-mms", "cavity"}


def test_error_metrics_reference_and_constant_pressure_shift():
    g = Grid(6)
    sys = build("stokes-mms", g)
    ref = sys.reference
    m = error_metrics(sys, ref)
    for k in ("sigma", "u", "p", "composite"):
        assert m[k] == 0.0
    shifted = ref.copy()
    shifted[sys.space.offsets[2]:] += 3.5
    assert error_metrics(sys, shifted)["p"] <= 1e-14


def test_error_metrics_composite_unrolled():
    g = Grid(6)
    sys = build("stokes-mms", g)
    rng = np.random.default_rng(4)
    v = sys.reference + 0.1 * rng.standard_normal(sys.full_dim)
    m = error_metrics(sys, v)
    num = sum(m[k + "_abs"] ** 2 for k in ("sigma", "u", "p"))
    den = sum((m[k + "_abs"] / m[k]) ** 2 for k in ("sigma", "u", "p"))
    assert m["composite"] == pytest.approx(np.sqrt(num / den), rel=1e-12)


def test_error_metrics_without_reference():
    from dvf.loss import ProblemSystem

    sys = build("laplace", Grid(4))
    bare = ProblemSystem("bare", sys.space, sys.A, sys.M, sys.G, sys.rhs, sys.bc)
    with pytest.raises(NoReferenceError):
        error_metrics(bare, np.zeros(sys.full_dim))


def test_laplace_direct_solve_accuracy_30():
    sys = build("laplace", Grid(30))
    v = reinsert_dofs(direct_solve(sys), sys.bc)
    assert error_metrics(sys, v)["u"] < 0.05
