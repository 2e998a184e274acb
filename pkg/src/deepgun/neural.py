"""Multilayer perceptrons, Adam and a small VAE, with hand-written backprop."""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import FormatError

ACTIVATIONS = ("relu", "sigmoid", "linear")
_ACT_CODE = {a: i for i, a in enumerate(ACTIVATIONS)}
LOGIT_CLIP = 1e-4


def _ceil_div(a, b):
    return -(-a // b)


@dataclass
class MlpParams:
    """Dense layers; ``weights[i]`` is ``(in, out)`` so a forward step is ``x @ W + b``."""

    weights: list
    biases: list
    activations: list

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for i, (W, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {act!r}")
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: weight {W.shape} and bias {b.shape} disagree")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input dim {W.shape[0]} does not chain "
                                 f"with previous output {self.weights[i - 1].shape[1]}")

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def copy(self):
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                         list(self.activations))

    def packed(self):
        """Flat vector of ``W_0, b_0, W_1, b_1, ...`` (row-major weights)."""
        return np.concatenate([np.concatenate([W.ravel(), b])
                               for W, b in zip(self.weights, self.biases)])

    def activation_codes(self):
        return np.array([_ACT_CODE[a] for a in self.activations], dtype=np.int64)


def init_mlp(dims, activations, rng):
    """Gaussian fan-in init: He scale for ReLU, ``1/sqrt(fan_in)`` otherwise; zero biases."""
    weights, biases = [], []
    for din, dout, act in zip(dims[:-1], dims[1:], activations):
        scale = math.sqrt((2.0 if act == "relu" else 1.0) / din)
        weights.append(rng.standard_normal((din, dout)) * scale)
        biases.append(np.zeros(dout))
    return MlpParams(weights, biases, list(activations))


def _act(s, kind):
    if kind == "relu":
        return np.maximum(s, 0.0)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-s))
    return s


def _act_grad(h, kind):
    # derivative in terms of the activation output; relu'(0) = 0
    if kind == "relu":
        return (h > 0.0).astype(h.dtype)
    if kind == "sigmoid":
        return h * (1.0 - h)
    return np.ones_like(h)


def mlp_forward(params, x):
    """Evaluate the network on a vector ``(in,)`` or a batch ``(B, in)``.

    Returns ``(output, cache)``; the cache holds the layer inputs and outputs.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.weights[0].shape[0]:
        raise ValueError(f"input dim {x.shape[-1]} != {params.weights[0].shape[0]}")
    hs = [x]
    h = x
    for W, b, act in zip(params.weights, params.biases, params.activations):
        h = _act(h @ W + b, act)
        hs.append(h)
    return h, hs


def mlp_backward(params, cache, output_grad):
    """Reverse-mode pass.  Returns ``(weight_grads, bias_grads, input_grad)``.

    For a batch, parameter gradients are summed over the batch.
    """
    delta = np.asarray(output_grad, dtype=np.float64)
    if delta.shape != cache[-1].shape:
        raise ValueError(f"output_grad {delta.shape} != output {cache[-1].shape}")
    n = len(params.weights)
    gW = [None] * n
    gb = [None] * n
    for i in range(n - 1, -1, -1):
        delta = delta * _act_grad(cache[i + 1], params.activations[i])
        h_in = cache[i]
        if delta.ndim == 1:
            gW[i] = np.outer(h_in, delta)
            gb[i] = delta.copy()
        else:
            gW[i] = h_in.T @ delta
            gb[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
    return gW, gb, delta


class Adam:
    """Adam with bias-corrected moments over a list of arrays, updated in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def kl_gauss(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over coordinates."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return 0.5 * float(np.sum(mu**2 + np.exp(logvar) - logvar - 1.0))


def encoder_hidden_sizes(L, K):
    return [_ceil_div(6 * L, 5) + 5, max(_ceil_div(L, 4), K + 2) + 3, max(_ceil_div(L, 10), K + 1)]


def decoder_hidden_sizes(L, K):
    return encoder_hidden_sizes(L, K)[::-1]


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_fraction: float = 1.0 / 3.0
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    kl_weight: float = 1.0
    init_logvar: float = -4.0
    centre_init: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class VaeModel:
    encoder: MlpParams
    decoder: MlpParams
    latent_dim: int
    bands: int
    loss_history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        K, L = self.latent_dim, self.bands
        enc_dims = [L] + encoder_hidden_sizes(L, K) + [2 * K]
        dec_dims = [K] + decoder_hidden_sizes(L, K) + [L]
        if self.encoder.dims != enc_dims:
            raise ValueError(f"encoder dims {self.encoder.dims} != {enc_dims}")
        if self.decoder.dims != dec_dims:
            raise ValueError(f"decoder dims {self.decoder.dims} != {dec_dims}")
        if self.encoder.activations != ["relu"] * 3 + ["linear"]:
            raise ValueError("encoder must be three relu layers and a linear head")
        if self.decoder.activations != ["relu"] * 3 + ["sigmoid"]:
            raise ValueError("decoder must be three relu layers and a sigmoid output")

    @classmethod
    def initialize(cls, bands, latent_dim, rng):
        K, L = latent_dim, bands
        enc = init_mlp([L] + encoder_hidden_sizes(L, K) + [2 * K], ["relu"] * 3 + ["linear"], rng)
        dec = init_mlp([K] + decoder_hidden_sizes(L, K) + [L], ["relu"] * 3 + ["sigmoid"], rng)
        return cls(enc, dec, K, L)


def encode_mean(model, spectrum):
    """Posterior mean code(s) for a spectrum ``(L,)`` or a batch ``(B, L)``."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    if spectrum.shape[-1] != model.bands:
        raise ValueError(f"spectrum has {spectrum.shape[-1]} bands, model expects {model.bands}")
    h, _ = mlp_forward(model.encoder, spectrum)
    return h[..., :model.latent_dim]


def decode(model, z):
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.latent_dim:
        raise ValueError(f"latent code has length {z.shape[-1]}, model expects {model.latent_dim}")
    return mlp_forward(model.decoder, z)[0]


def decode_with_input_grad(model, z, output_grad):
    """Vector-Jacobian product of the decoder at ``z`` with ``output_grad``."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.latent_dim,):
        raise ValueError(f"latent code shape {z.shape} != ({model.latent_dim},)")
    out, cache = mlp_forward(model.decoder, z)
    return mlp_backward(model.decoder, cache, output_grad)[2]


def _centre_relu_biases(params, x):
    # shift each relu unit so it is active on half of the batch
    h = x
    for W, b, act in zip(params.weights, params.biases, params.activations):
        s = h @ W + b
        if act == "relu":
            b -= np.median(s, axis=0)
            s = h @ W + b
        h = _act(s, act)


def train_vae(pure_pixels, config, latent_dim):
    """Fit a VAE to ``pure_pixels`` ``(S, L)`` by minibatch Adam on the negative ELBO.

    Loss per datum: squared reconstruction error summed over bands plus the
    Gaussian KL term (times ``config.kl_weight``), averaged over the minibatch;
    one reparameterised sample per datum.

    Initialisation is data dependent: the decoder output bias starts at the
    logit of the mean training spectrum, the log-variance head at
    ``config.init_logvar``, and with ``config.centre_init`` every relu unit is
    shifted to fire on half the batch so the narrow layers next to the latent
    code do not start dead.  Final parameters are rounded to float32 so a
    model saved to ``.vaem`` reloads bit-identically.
    """
    X = np.asarray(pure_pixels, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("pure_pixels must be (S, L)")
    S, L = X.shape
    if S < 3:
        raise ValueError(f"need at least 3 training spectra, got {S}")
    if not np.all(np.isfinite(X)) or X.min() < 0 or X.max() > 1:
        raise ValueError("training spectra must lie in [0, 1]")
    K = latent_dim
    rng = np.random.default_rng(config.seed)
    model = VaeModel.initialize(L, K, rng)
    enc, dec = model.encoder, model.decoder
    # start the decoder at the mean training spectrum rather than at 0.5
    mean = np.clip(X.mean(axis=0), LOGIT_CLIP, 1.0 - LOGIT_CLIP)
    dec.biases[-1][...] = np.log(mean / (1.0 - mean))
    enc.biases[-1][K:] = config.init_logvar
    if config.centre_init:
        _centre_relu_biases(enc, X)
        h = mlp_forward(enc, X)[0]
        z = h[:, :K] + np.exp(0.5 * h[:, K:]) * rng.standard_normal((S, K))
        _centre_relu_biases(dec, z)
    params = enc.weights + enc.biases + dec.weights + dec.biases
    opt = Adam(params, config.learning_rate, config.adam_beta1, config.adam_beta2,
               config.adam_epsilon)
    bs = math.ceil(S * config.batch_fraction)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(S)
        total = 0.0
        for start in range(0, S, bs):
            xb = X[order[start:start + bs]]
            B = xb.shape[0]
            h, enc_cache = mlp_forward(enc, xb)
            mu, logvar = h[:, :K], h[:, K:]
            std = np.exp(0.5 * logvar)
            eps = rng.standard_normal(mu.shape)
            z = mu + std * eps
            xr, dec_cache = mlp_forward(dec, z)
            diff = xr - xb
            beta = config.kl_weight
            loss = (np.sum(diff**2) + 0.5 * beta * np.sum(mu**2 + std**2 - logvar - 1.0)) / B
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite VAE loss at epoch {epoch + 1}")
            total += loss * B
            gWd, gbd, gz = mlp_backward(dec, dec_cache, 2.0 * diff / B)
            gmu = gz + beta * mu / B
            glogvar = 0.5 * gz * eps * std + 0.5 * beta * (std**2 - 1.0) / B
            gWe, gbe, _ = mlp_backward(enc, enc_cache, np.concatenate([gmu, glogvar], axis=1))
            opt.step(gWe + gbe + gWd + gbd)
        history.append(total / S)
    for p in params:
        p[...] = p.astype(np.float32)
    model.loss_history = history
    return model


# ---------------------------------------------------------------------------
# .vaem files
# ---------------------------------------------------------------------------

VAEM_MAGIC = b"VAEM"
VAEM_VERSION = 1


def _mlp_bytes(params):
    out = [struct.pack("<I", len(params.weights))]
    for W, b, act in zip(params.weights, params.biases, params.activations):
        out.append(struct.pack("<IIB", W.shape[0], W.shape[1], _ACT_CODE[act]))
        out.append(np.ascontiguousarray(W, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(out)


def model_to_bytes(model):
    head = VAEM_MAGIC + struct.pack("<III", VAEM_VERSION, model.latent_dim, model.bands)
    return head + _mlp_bytes(model.encoder) + _mlp_bytes(model.decoder)


def _read_mlp(buf, off):
    def need(n):
        if off + n > len(buf):
            raise FormatError("truncated model file", offset=len(buf))

    need(4)
    (nl,) = struct.unpack_from("<I", buf, off)
    off += 4
    weights, biases, acts = [], [], []
    for _ in range(nl):
        need(9)
        din, dout, code = struct.unpack_from("<IIB", buf, off)
        if code >= len(ACTIVATIONS):
            raise FormatError(f"unknown activation code {code}", offset=off + 8)
        off += 9
        need(4 * (din * dout + dout))
        W = np.frombuffer(buf, "<f4", din * dout, off).reshape(din, dout).astype(np.float64)
        off += 4 * din * dout
        b = np.frombuffer(buf, "<f4", dout, off).astype(np.float64)
        off += 4 * dout
        weights.append(W)
        biases.append(b)
        acts.append(ACTIVATIONS[code])
    try:
        return MlpParams(weights, biases, acts), off
    except ValueError as exc:
        raise FormatError(str(exc), offset=off) from None


def model_from_bytes(buf):
    if len(buf) < 16:
        raise FormatError("truncated model header", offset=len(buf))
    if buf[:4] != VAEM_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", offset=0)
    version, K, L = struct.unpack_from("<III", buf, 4)
    if version != VAEM_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    enc, off = _read_mlp(buf, 16)
    dec, off = _read_mlp(buf, off)
    if off != len(buf):
        raise FormatError("trailing bytes after decoder", offset=off)
    try:
        return VaeModel(enc, dec, K, L)
    except ValueError as exc:
        raise FormatError(str(exc), offset=16) from None


def save_model(path, model):
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path):
    return model_from_bytes(Path(path).read_bytes())
