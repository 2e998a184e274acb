"""Reference endmember extraction, pure-pixel bundles and latent reference codes."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import spectral_angles
from .neural import encode_mean

log = logging.getLogger(__name__)


class RankDeficiencyError(ValueError):
    """The data span fewer dimensions than the requested number of endmembers."""


@dataclass(frozen=True)
class PurePixelSet:
    material: int
    pixel_indices: np.ndarray   # (S_p,)
    spectra: np.ndarray         # (S_p, L)


def _estimate_snr(Y, r_m, x):
    L, N = Y.shape
    p = x.shape[0]
    P_y = np.sum(Y**2) / N
    P_x = np.sum(x**2) / N + np.sum(r_m**2)
    num = P_x - p / L * P_y
    den = P_y - P_x
    if den <= 0 or num <= 0:
        return math.inf if den <= 0 else -math.inf
    return 10 * math.log10(num / den)


def vca(cube, materials, seed=0, snr_input=None):
    """Vertex component analysis.

    Returns ``(M0, indices)``: ``M0`` is ``(L, P)`` and its columns are the
    observed spectra of the pixels at ``indices``.
    """
    Y = cube.matrix() if hasattr(cube, "matrix") else np.asarray(cube, dtype=np.float64)
    L, N = Y.shape
    R = int(materials)
    if not 1 <= R <= L:
        raise ValueError(f"materials must be in [1, {L}], got {R}")
    if N < R:
        raise ValueError(f"{N} pixels cannot hold {R} endmembers")
    sv = np.linalg.svd(Y, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * max(L, N) * np.finfo(float).eps)) if sv[0] > 0 else 0
    if rank < R:
        raise RankDeficiencyError(f"data subspace has dimension {rank} < {R} endmembers")
    if R == 1:
        u = Y.mean(axis=1)
        idx = int(np.argmax(u @ Y))
        return Y[:, [idx]].copy(), np.array([idx])

    rng = np.random.default_rng(seed)
    y_m = Y.mean(axis=1, keepdims=True)
    Y_o = Y - y_m
    Ud = np.linalg.svd(Y_o @ Y_o.T / N)[0][:, :R]
    x_p = Ud.T @ Y_o
    snr = _estimate_snr(Y, y_m, x_p) if snr_input is None else float(snr_input)
    snr_th = 15 + 10 * math.log10(R)

    if snr < snr_th:
        d = R - 1
        Ud = Ud[:, :d]
        x = x_p[:d, :]
        c = np.sqrt(np.max(np.sum(x**2, axis=0)))
        y = np.vstack([x, c * np.ones((1, N))])
    else:
        d = R
        Ud = np.linalg.svd(Y @ Y.T / N)[0][:, :d]
        x = Ud.T @ Y
        u = x.mean(axis=1, keepdims=True)
        y = x / np.sum(x * u, axis=0, keepdims=True)

    indices = np.zeros(R, dtype=np.int64)
    A = np.zeros((R, R))
    A[-1, 0] = 1.0
    for i in range(R):
        w = rng.random((R, 1))
        f = w - A @ (np.linalg.pinv(A) @ w)
        f /= np.linalg.norm(f)
        v = (f.T @ y).ravel()
        indices[i] = int(np.argmax(np.abs(v)))
        A[:, i] = y[:, indices[i]]
    return Y[:, indices].copy(), indices


def extract_pure_pixels(cube, m0, count):
    """For each reference column pick the ``count`` pixels with the smallest spectral angle.

    Ties go to the lower pixel index.  Bundles of different materials may overlap.
    """
    Y = cube.matrix()
    m0 = np.asarray(m0, dtype=np.float64)
    N = Y.shape[1]
    if count < 1 or count > N:
        raise ValueError(f"bundle size must be in [1, {N}], got {count}")
    zero = np.linalg.norm(Y, axis=0) == 0
    if zero.any():
        log.warning("skipping %d zero-norm pixels", int(zero.sum()))
    if N - zero.sum() < count:
        raise ValueError(f"only {N - zero.sum()} valid pixels for a bundle of {count}")
    sets = []
    for p in range(m0.shape[1]):
        ang = spectral_angles(Y, m0[:, p])
        ang[zero] = np.inf
        idx = np.lexsort((np.arange(N), ang))[:count]
        sets.append(PurePixelSet(p, idx, Y[:, idx].T.copy()))
    return sets


def latent_reference(models, m0):
    """Encoder means of the reference spectra, returned ``(K, P)``."""
    m0 = np.asarray(m0, dtype=np.float64)
    if len(models) != m0.shape[1]:
        raise ValueError(f"{len(models)} models for {m0.shape[1]} reference spectra")
    cols = []
    for p, model in enumerate(models):
        if model.bands != m0.shape[0]:
            raise ValueError(f"model {p} expects {model.bands} bands, M0 has {m0.shape[0]}")
        cols.append(encode_mean(model, m0[:, p]))
    return np.stack(cols, axis=1)
