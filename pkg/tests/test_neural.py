import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import relu_margin

from deepgun.core import nrmse
from deepgun.io import FormatError
from deepgun.neural import (Adam, MlpParams, TrainConfig, VaeModel, decode,
                            decode_with_input_grad, decoder_hidden_sizes, encode_mean,
                            encoder_hidden_sizes, init_mlp, kl_gauss, load_model,
                            mlp_backward, mlp_forward, model_from_bytes, model_to_bytes,
                            save_model, train_vae)


def single(W, b, act):
    return MlpParams([np.asarray(W, float)], [np.asarray(b, float)], [act])


def test_forward_examples():
    out, _ = mlp_forward(single(np.zeros((3, 4)), np.zeros(4), "sigmoid"), np.ones(3))
    assert np.array_equal(out, np.full(4, 0.5))
    x = np.array([0.3, -2.0, 5.0])
    assert np.array_equal(mlp_forward(single(np.eye(3), np.zeros(3), "linear"), x)[0], x)
    out, _ = mlp_forward(single(np.eye(2), np.zeros(2), "relu"), [-1.0, 2.0])
    assert np.array_equal(out, [0.0, 2.0])


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        mlp_forward(single(np.eye(3), np.zeros(3), "linear"), np.ones(4))


def test_params_must_chain():
    with pytest.raises(ValueError):
        MlpParams([np.ones((2, 3)), np.ones((4, 2))], [np.zeros(3), np.zeros(2)],
                  ["relu", "linear"])


def test_linear_gradient_closed_form(rng):
    W = rng.standard_normal((4, 3))
    p = single(W, rng.standard_normal(3), "linear")
    x, t = rng.standard_normal(4), rng.standard_normal(3)
    out, cache = mlp_forward(p, x)
    gW, gb, gx = mlp_backward(p, cache, out - t)
    assert np.allclose(gW[0], np.outer(x, out - t))
    assert np.allclose(gb[0], out - t)
    assert np.allclose(gx, W @ (out - t))


def _fd_check(params, x, g, h=1e-5):
    out, cache = mlp_forward(params, x)
    gW, gb, gx = mlp_backward(params, cache, g)

    def f():
        return float(mlp_forward(params, x)[0] @ g)

    errs = []
    for arrs, grads in ((params.weights, gW), (params.biases, gb)):
        for A, G in zip(arrs, grads):
            for idx in np.ndindex(A.shape):
                old = A[idx]
                A[idx] = old + h
                fp = f()
                A[idx] = old - h
                fm = f()
                A[idx] = old
                errs.append(((fp - fm) / (2 * h), G[idx]))
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        fp = float(mlp_forward(params, x + e)[0] @ g)
        fm = float(mlp_forward(params, x - e)[0] @ g)
        errs.append(((fp - fm) / (2 * h), gx[i]))
    num, ana = np.array(errs).T
    return np.linalg.norm(num - ana) / max(np.linalg.norm(num), 1e-12)


@given(st.lists(st.integers(1, 5), min_size=2, max_size=4),
       st.lists(st.sampled_from(["relu", "sigmoid", "linear"]), min_size=3, max_size=3),
       st.integers(0, 2**32 - 1))
def test_backprop_matches_finite_differences(dims, acts, seed):
    rng = np.random.default_rng(seed)
    acts = acts[:len(dims) - 1]
    p = init_mlp(dims, acts, rng)
    for b in p.biases:
        b[...] = rng.standard_normal(b.shape) * 0.3
    x = rng.standard_normal(dims[0])
    assume(relu_margin(p, x) > 1e-3)
    g = rng.standard_normal(dims[-1])
    assert _fd_check(p, x, g) < 1e-4


def test_zero_output_grad_gives_zero(rng):
    p = init_mlp([3, 4, 2], ["relu", "sigmoid"], rng)
    out, cache = mlp_forward(p, rng.standard_normal(3))
    gW, gb, gx = mlp_backward(p, cache, np.zeros(2))
    assert not any(g.any() for g in gW + gb) and not gx.any()


def test_relu_subgradient_at_zero():
    p = single(np.eye(2), np.zeros(2), "relu")
    out, cache = mlp_forward(p, np.array([0.0, 1.0]))
    _, _, gx = mlp_backward(p, cache, np.ones(2))
    assert np.array_equal(gx, [0.0, 1.0])


def test_batch_gradients_are_sums(rng):
    p = init_mlp([3, 5, 2], ["relu", "linear"], rng)
    X, G = rng.standard_normal((4, 3)), rng.standard_normal((4, 2))
    _, cache = mlp_forward(p, X)
    gW, gb, gX = mlp_backward(p, cache, G)
    acc = [np.zeros_like(w) for w in p.weights]
    for i in range(4):
        _, c = mlp_forward(p, X[i])
        w, _, gx = mlp_backward(p, c, G[i])
        acc = [a + b for a, b in zip(acc, w)]
        assert np.allclose(gX[i], gx)
    assert all(np.allclose(a, b) for a, b in zip(acc, gW))


def test_adam_matches_reference_update():
    p = np.array([1.0, -2.0])
    opt = Adam([p], lr=0.1)
    # oracle: textbook bias-corrected recursion
    m = v = np.zeros(2)
    q = np.array([1.0, -2.0])
    for t in range(1, 6):
        g = 2 * q
        opt.step([2 * p])
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        q = q - 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert np.allclose(p, q, rtol=0, atol=1e-14)


def test_kl_examples():
    assert kl_gauss([0.0], [0.0]) == 0.0
    assert kl_gauss([1.0], [0.0]) == 0.5
    assert kl_gauss([0.0], [math.log(4)]) == pytest.approx(0.5 * (4 - math.log(4) - 1))
    assert kl_gauss([0.0], [math.log(4)]) == pytest.approx(0.8069, abs=1e-4)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(-5, 5))
def test_kl_nonnegative(mu, lv):
    val = kl_gauss(mu, np.full(len(mu), lv))
    assert val >= 0
    if max(np.max(np.abs(mu)), abs(lv)) > 1e-6:
        assert val > 0
    assert kl_gauss(np.zeros(len(mu)), np.zeros(len(mu))) == 0.0


@given(st.integers(10, 512), st.integers(1, 8))
def test_vae_architecture(L, K):
    m = VaeModel.initialize(L, K, np.random.default_rng(0))
    h1, h2, h3 = math.ceil(1.2 * L) + 5, max(math.ceil(L / 4), K + 2) + 3, max(math.ceil(L / 10), K + 1)
    assert encoder_hidden_sizes(L, K) == [h1, h2, h3]
    assert decoder_hidden_sizes(L, K) == [h3, h2, h1]
    assert m.encoder.dims == [L, h1, h2, h3, 2 * K]
    assert m.decoder.dims == [K, h3, h2, h1, L]
    assert m.encoder.activations == ["relu"] * 3 + ["linear"]
    assert m.decoder.activations == ["relu"] * 3 + ["sigmoid"]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_fraction=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_fraction=1.5)


def test_train_rejects_bad_input():
    with pytest.raises(ValueError):
        train_vae(np.full((2, 10), 0.5), TrainConfig(), 2)
    with pytest.raises(ValueError):
        train_vae(np.full((5, 10), 1.5), TrainConfig(), 2)


def _bundle(seed, S=30, L=40):
    rng = np.random.default_rng(seed)
    base = 0.2 + 0.6 * np.sin(np.linspace(0, 3, L)) ** 2
    return np.clip(base * rng.uniform(0.8, 1.2, (S, 1)), 0, 1)


def test_training_deterministic():
    X = _bundle(0)
    a = train_vae(X, TrainConfig(seed=3, epochs=5), 2)
    b = train_vae(X, TrainConfig(seed=3, epochs=5), 2)
    assert model_to_bytes(a) == model_to_bytes(b)
    assert a.loss_history == b.loss_history


def test_training_loss_decreases():
    m = train_vae(_bundle(1), TrainConfig(seed=0), 2)
    assert len(m.loss_history) == 50
    assert m.loss_history[-1] <= m.loss_history[0]


@pytest.mark.parametrize("S", [3, 10, 30, 100])
def test_repeated_spectrum_reconstructed(S):
    x = np.linspace(0.1, 0.9, 40) ** 2
    m = train_vae(np.tile(x, (S, 1)), TrainConfig(seed=1), 2)
    assert np.max(np.abs(decode(m, encode_mean(m, x)) - x)) < 0.02


@pytest.mark.parametrize("seed", range(3))
def test_codes_separate_clusters(seed):
    rng = np.random.default_rng(seed)
    L = 50
    a = np.linspace(0.2, 0.8, L)
    X = np.vstack([np.clip(a + 0.01 * rng.standard_normal((10, L)), 0, 1),
                   np.clip(a[::-1] + 0.01 * rng.standard_normal((10, L)), 0, 1)])
    m = train_vae(X, TrainConfig(seed=seed), 2)
    Z = encode_mean(m, X)
    c1, c2 = Z[:10].mean(0), Z[10:].mean(0)
    intra = np.mean(np.r_[np.linalg.norm(Z[:10] - c1, axis=1), np.linalg.norm(Z[10:] - c2, axis=1)])
    assert np.linalg.norm(c1 - c2) > intra


def test_bundle_reconstruction_two_cluster():
    # a bundle with a dominant direction worth encoding
    rng = np.random.default_rng(0)
    L = 50
    a = np.linspace(0.2, 0.8, L)
    X = np.vstack([np.clip(a + 0.01 * rng.standard_normal((10, L)), 0, 1),
                   np.clip(a[::-1] + 0.01 * rng.standard_normal((10, L)), 0, 1)])
    m = train_vae(X, TrainConfig(seed=0), 2)
    assert nrmse(X, decode(m, encode_mean(m, X))) < 0.15


@pytest.mark.xfail(strict=True, reason="scaling-only bundles sit below the KL threshold; "
                   "the ELBO optimum decodes the bundle mean")
def test_bundle_reconstruction_scaling_bundle():
    X = _bundle(2, S=100)
    m = train_vae(X, TrainConfig(seed=0), 2)
    assert nrmse(X, decode(m, encode_mean(m, X))) < 0.05


def test_encode_decode_shapes_and_range(rng):
    m = VaeModel.initialize(20, 3, rng)
    x = rng.random(20)
    assert encode_mean(m, x).shape == (3,)
    assert np.array_equal(encode_mean(m, x), encode_mean(m, x.copy()))
    y = decode(m, rng.standard_normal(3))
    assert y.shape == (20,) and np.all((y > 0) & (y < 1))
    with pytest.raises(ValueError):
        encode_mean(m, np.ones(19))
    with pytest.raises(ValueError):
        decode(m, np.ones(2))


def test_decode_continuity():
    m = train_vae(_bundle(3), TrainConfig(seed=0), 2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = rng.standard_normal(2)
        d = rng.standard_normal(2)
        d *= 1e-3 / np.linalg.norm(d)
        assert np.max(np.abs(decode(m, z + d) - decode(m, z))) < 0.5


@given(st.integers(0, 2**32 - 1))
def test_decoder_input_grad_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = VaeModel.initialize(12, 2, rng)
    for b in m.decoder.biases:
        b[...] = rng.standard_normal(b.shape) * 0.3
    z = rng.standard_normal(2)
    assume(relu_margin(m.decoder, z) > 1e-3)
    g = rng.standard_normal(12)
    ana = decode_with_input_grad(m, z, g)
    h = 1e-5
    num = np.array([(decode(m, z + h * e) @ g - decode(m, z - h * e) @ g) / (2 * h)
                    for e in np.eye(2)])
    assert np.linalg.norm(num - ana) <= 1e-4 * max(np.linalg.norm(num), 1e-8)


def test_decoder_input_grad_linear_and_zero(rng):
    m = VaeModel.initialize(12, 3, rng)
    z = rng.standard_normal(3)
    g1, g2 = rng.standard_normal(12), rng.standard_normal(12)
    lhs = decode_with_input_grad(m, z, 2.0 * g1 - 0.5 * g2)
    rhs = 2.0 * decode_with_input_grad(m, z, g1) - 0.5 * decode_with_input_grad(m, z, g2)
    assert np.allclose(lhs, rhs, atol=1e-12)
    assert not decode_with_input_grad(m, z, np.zeros(12)).any()
    with pytest.raises(ValueError):
        decode_with_input_grad(m, np.ones(2), g1)


def test_model_file_roundtrip(tmp_path):
    m = train_vae(_bundle(4), TrainConfig(seed=0, epochs=3), 2)
    save_model(tmp_path / "m.vaem", m)
    m2 = load_model(tmp_path / "m.vaem")
    assert model_to_bytes(m2) == model_to_bytes(m)
    z = np.array([0.3, -0.2])
    assert np.array_equal(decode(m2, z), decode(m, z))
    buf = model_to_bytes(m)
    assert buf[:4] == b"VAEM"


def test_model_file_errors():
    buf = model_to_bytes(VaeModel.initialize(10, 2, np.random.default_rng(0)))
    with pytest.raises(FormatError):
        model_from_bytes(buf[:-3])
    with pytest.raises(FormatError):
        model_from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        model_from_bytes(buf + b"\0")
    with pytest.raises(FormatError):
        model_from_bytes(buf[:4] + (2).to_bytes(4, "little") + buf[8:])
