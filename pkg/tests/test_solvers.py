import numpy as np
import pytest
from conftest import active_set_qp, relu_margin
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deepgun.neural import VaeModel
from deepgun.solvers import (AdmmConfig, bfgs_minimize, fcls, latent_objective, project_simplex,
                             solve_a_step, solve_z_step, spatial_gradients,
                             spatial_gradients_adjoint)

# -- simplex projection ------------------------------------------------------


def test_project_simplex_examples():
    assert np.allclose(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5], atol=1e-15)
    assert np.array_equal(project_simplex([2.0, 0.0]), [1.0, 0.0])
    assert np.allclose(project_simplex([0.5, 0.5, 1.0]), [1 / 6, 1 / 6, 2 / 3], atol=1e-15)


@given(arrays(float, st.integers(1, 5), elements=st.floats(-3, 3)))
def test_project_simplex_matches_enumeration(v):
    x = project_simplex(v)
    # projection minimises 0.5||x||^2 - v'x over the simplex
    oracle = active_set_qp(np.eye(len(v)), v)
    assert np.max(np.abs(x - oracle)) < 1e-8
    assert np.all(x >= 0) and abs(x.sum() - 1) < 1e-12


def test_project_simplex_columns_and_errors(rng):
    V = rng.standard_normal((4, 7))
    out = project_simplex(V)
    for n in range(7):
        assert np.array_equal(out[:, n], project_simplex(V[:, n]))
    with pytest.raises(ValueError):
        project_simplex([np.nan, 1.0])

# -- FCLS --------------------------------------------------------------------


def test_fcls_identity_example():
    assert np.allclose(fcls([0.3, 0.7], np.eye(2)), [0.3, 0.7], atol=1e-12)


def test_fcls_noiseless_recovery(rng):
    M = rng.uniform(0.05, 0.95, (30, 4))
    A = rng.dirichlet(np.ones(4), 25).T
    assert np.max(np.abs(fcls(M @ A, M) - A)) < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_fcls_matches_active_set_oracle(seed):
    rng = np.random.default_rng(seed)
    M = rng.uniform(0, 1, (8, 3))
    y = rng.uniform(0, 1.5, 8)
    oracle = active_set_qp(M.T @ M, M.T @ y)
    assert np.max(np.abs(fcls(y, M) - oracle)) < 1e-6


def test_fcls_errors():
    with pytest.raises(ValueError):
        fcls([np.inf, 1.0], np.eye(2))
    with pytest.raises(ValueError):
        fcls(np.ones(3), np.eye(2))

# -- BFGS --------------------------------------------------------------------


def test_bfgs_identity_quadratic(rng):
    c = rng.standard_normal(5)
    res = bfgs_minimize(lambda z: (0.5 * np.sum((z - c) ** 2), z - c), rng.standard_normal(5),
                        tol=1e-12)
    assert np.max(np.abs(res.x - c)) < 1e-10
    assert res.iterations <= 3


def rosen(z):
    x, y = z
    f = (1 - x) ** 2 + 100 * (y - x * x) ** 2
    g = np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])
    return f, g


def test_bfgs_rosenbrock():
    res = bfgs_minimize(rosen, [-1.2, 1.0], tol=1e-12, max_iter=500)
    assert np.max(np.abs(res.x - 1.0)) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_bfgs_spd_quadratic(seed):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((6, 6))
    H = Q @ Q.T + 0.5 * np.eye(6)
    b = rng.standard_normal(6)
    res = bfgs_minimize(lambda z: (0.5 * z @ H @ z - b @ z, H @ z - b), np.zeros(6),
                        tol=1e-14, max_iter=50)
    assert np.max(np.abs(res.x - np.linalg.solve(H, b))) < 1e-8
    assert res.iterations <= 50


@given(st.integers(0, 10_000))
def test_bfgs_history_non_increasing(seed):
    rng = np.random.default_rng(seed)
    res = bfgs_minimize(rosen, rng.uniform(-2, 2, 2), tol=1e-10, max_iter=200)
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 0)


def test_bfgs_rejects_nonfinite_start():
    with pytest.raises(ValueError):
        bfgs_minimize(lambda z: (np.inf, z), np.zeros(2))

# -- latent step -------------------------------------------------------------


class LinearDecoder:
    """Test double: decode(z) = W z + b."""

    def __init__(self, W, b):
        self.W, self.b = W, b

    def decode(self, z):
        return self.W @ z + self.b

    def decode_vjp(self, z, g):
        return self.W.T @ g


def test_z_step_linear_decoder_normal_equations(rng):
    W = rng.standard_normal((10, 3))
    b = rng.standard_normal(10)
    y = rng.standard_normal(10)
    Z = solve_z_step(y, np.ones(1), [LinearDecoder(W, b)], np.zeros((1, 3)), np.zeros((3, 1)),
                     0.0, tol=1e-12, max_iter=200)
    z_ls = np.linalg.solve(W.T @ W, W.T @ (y - b))
    assert np.max(np.abs(Z[0] - z_ls)) < 1e-6


def _models(rng, L=12, K=2, P=3):
    ms = [VaeModel.initialize(L, K, rng) for _ in range(P)]
    for m in ms:
        for bias in m.decoder.biases:
            bias[...] = rng.standard_normal(bias.shape) * 0.3
    return ms


@pytest.mark.parametrize("packed", [True, False])
@given(seed=st.integers(0, 10_000))
def test_z_objective_gradient_matches_fd(packed, seed):
    rng = np.random.default_rng(seed)
    models = _models(rng)
    y = rng.random(12)
    a = rng.dirichlet(np.ones(3))
    z0 = rng.standard_normal((2, 3))
    fg = latent_objective(models, y, a, z0, 0.3) if packed else \
        latent_objective([_Wrap(m) for m in models], y, a, z0, 0.3)
    z = rng.standard_normal(6)
    assume(all(relu_margin(m.decoder, zp) > 1e-3 for m, zp in zip(models, z.reshape(3, 2))))
    f, g = fg(z)
    h = 1e-5
    num = np.array([(fg(z + h * e)[0] - fg(z - h * e)[0]) / (2 * h) for e in np.eye(6)])
    assume(np.linalg.norm(num) > 1e-6)
    assert np.linalg.norm(num - g) < 1e-4 * np.linalg.norm(num)


class _Wrap:
    """Routes a VaeModel through the generic (non-packed) objective path."""

    def __init__(self, m):
        from deepgun.neural import decode, decode_with_input_grad
        self.m, self._d, self._g = m, decode, decode_with_input_grad

    def decode(self, z):
        return self._d(self.m, z)

    def decode_vjp(self, z, g):
        return self._g(self.m, z, g)


def test_z_objective_packed_equals_generic(rng):
    models = _models(rng)
    y, a, z0 = rng.random(12), rng.dirichlet(np.ones(3)), rng.standard_normal((2, 3))
    f1 = latent_objective(models, y, a, z0, 0.1)
    f2 = latent_objective([_Wrap(m) for m in models], y, a, z0, 0.1)
    z = rng.standard_normal(6)
    v1, g1 = f1(z)
    v2, g2 = f2(z)
    assert v1 == pytest.approx(v2, rel=1e-12)
    assert np.allclose(g1, g2, rtol=1e-10, atol=1e-14)


def test_z_step_strong_regulariser_returns_reference(rng):
    models = _models(rng)
    z0 = rng.standard_normal((2, 3))
    Z = solve_z_step(rng.random(12), rng.dirichlet(np.ones(3)), models, np.zeros((3, 2)), z0, 1e6,
                     tol=1e-10)
    assert np.max(np.abs(Z - z0.T)) < 1e-3


def test_z_step_decreases_objective(rng):
    models = _models(rng)
    y, a, z0 = rng.random(12), rng.dirichlet(np.ones(3)), rng.standard_normal((2, 3))
    fg = latent_objective(models, y, a, z0, 0.1)
    Z, res = solve_z_step(y, a, models, z0.T, z0, 0.1, return_result=True)
    assert res.fun <= fg(z0.T.ravel())[0]
    assert Z.shape == (3, 2)

# -- spatial gradients ---------------------------------------------------------


def test_spatial_gradient_examples():
    Dh, Dv = spatial_gradients(np.full((2, 6), 0.5), 2, 3)
    assert not Dh.any() and not Dv.any()
    Dh, Dv = spatial_gradients(np.array([[0.0, 1.0]]), 1, 2)
    assert np.array_equal(Dh, [[1.0, 0.0]]) and not Dv.any()
    Dh, Dv = spatial_gradients(np.array([[0.0], [1.0]]).T, 2, 1)
    assert np.array_equal(Dv, [[1.0, 0.0]]) and not Dh.any()
    with pytest.raises(ValueError):
        spatial_gradients(np.ones((1, 5)), 2, 3)


def test_spatial_gradient_adjoint_dot_product():
    rng = np.random.default_rng(0)
    for _ in range(100):
        h, w, P = rng.integers(1, 7, 3)
        X = rng.standard_normal((P, h * w))
        Yh, Yv = rng.standard_normal((2, P, h * w))
        Dh, Dv = spatial_gradients(X, h, w)
        lhs = np.sum(Dh * Yh) + np.sum(Dv * Yv)
        rhs = np.sum(X * spatial_gradients_adjoint(Yh, Yv, h, w))
        assert abs(lhs - rhs) < 1e-10

# -- ADMM abundance step ---------------------------------------------------------


def _scene(rng, h=6, w=7, L=15, P=3, vary=True, noise=0.0):
    N = h * w
    M0 = rng.uniform(0.1, 0.9, (L, P))
    em = M0[:, :, None] * (rng.uniform(0.85, 1.15, (L, P, N)) if vary else 1.0)
    em = np.broadcast_to(em, (L, P, N)).copy()
    A = rng.dirichlet(np.ones(P), N).T
    Y = np.einsum("lpn,pn->ln", em, A) + noise * rng.standard_normal((L, N))
    return Y, em, A


def test_admm_without_penalty_matches_pixelwise_fcls(rng):
    Y, em, _ = _scene(rng, noise=0.02)
    A0 = np.full((3, 42), 1 / 3)
    cfg = AdmmConfig(lambda_a=0.0, max_iterations=5000, tol_primal=1e-9, tol_dual=1e-9)
    A = solve_a_step(Y, em, A0, cfg, 6, 7)
    ref = np.stack([fcls(Y[:, n], em[:, :, n], tol=1e-16, max_iter=100000) for n in range(42)], 1)
    assert np.max(np.abs(A - ref)) < 1e-4


def test_admm_noiseless_recovery(rng):
    Y, em, A_true = _scene(rng, vary=False)
    cfg = AdmmConfig(lambda_a=0.0, max_iterations=5000, tol_primal=1e-9, tol_dual=1e-9)
    A = solve_a_step(Y, em, np.full((3, 42), 1 / 3), cfg, 6, 7)
    assert np.max(np.abs(A - A_true)) < 1e-4


@pytest.mark.parametrize("lam", [0.0, 0.01, 0.1])
def test_admm_lagrangian_monotone_within_sweep(rng, lam):
    Y, em, _ = _scene(rng, noise=0.01)
    A, info = solve_a_step(Y, em, np.full((3, 42), 1 / 3), AdmmConfig(lambda_a=lam), 6, 7,
                           return_info=True)
    for before, after_a, after_v in info.lagrangian:
        assert after_a <= before + 1e-8
        assert after_v <= after_a + 1e-8


@pytest.mark.parametrize("lam", [0.0, 0.05])
def test_admm_output_feasible(rng, lam):
    Y, em, _ = _scene(rng, noise=0.05)
    A = solve_a_step(Y, em, np.full((3, 42), 1 / 3), AdmmConfig(lambda_a=lam), 6, 7)
    assert A.min() >= -1e-9 and np.max(np.abs(A.sum(0) - 1)) < 1e-6


def test_admm_penalty_smooths(rng):
    Y, em, _ = _scene(rng, noise=0.05)
    A0 = np.full((3, 42), 1 / 3)
    tv = []
    for lam in (0.0, 0.5):
        A = solve_a_step(Y, em, A0, AdmmConfig(lambda_a=lam), 6, 7)
        Dh, Dv = spatial_gradients(A, 6, 7)
        tv.append(np.sum(np.linalg.norm(Dh, axis=0)) + np.sum(np.linalg.norm(Dv, axis=0)))
    assert tv[1] < tv[0]


def test_admm_config_validation(rng):
    with pytest.raises(ValueError):
        AdmmConfig(rho=0)
    with pytest.raises(ValueError):
        AdmmConfig(tol_primal=0)
    Y, em, _ = _scene(rng)
    with pytest.raises(ValueError):
        solve_a_step(Y, em, np.full((3, 41), 1 / 3), AdmmConfig(), 6, 7)
