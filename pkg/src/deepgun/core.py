"""Data containers, validators and evaluation metrics.

Array conventions used throughout the package:

* cube data ``(H, W, L)``; flat pixel index ``n = i * W + j``
* observation matrix ``Y`` is ``(L, N)``
* endmember matrix ``(L, P)``
* abundance matrix ``(P, N)``
* endmember tensor ``(L, P, N)``; slice ``[:, :, n]`` is pixel n's matrix
* latent tensor ``(N, P, K)``; slice ``[n]`` is ``Z_n`` stored ``P x K``
* latent reference ``(K, P)``; column p is the reference code of material p
"""

from dataclasses import dataclass

import numpy as np


class DegenerateSpectrumError(ValueError):
    """A spectrum with zero norm was given where an angle is needed."""


@dataclass(frozen=True)
class HyperCube:
    """An ``H x W x L`` reflectance raster."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"cube data must be 3-D (H, W, L), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("cube contains non-finite reflectances")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_matrix(cls, Y, height, width):
        """Build from an ``(L, N)`` observation matrix."""
        Y = np.asarray(Y, dtype=np.float64)
        if Y.shape[1] != height * width:
            raise ValueError(f"N={Y.shape[1]} does not match {height}x{width}")
        return cls(Y.T.reshape(height, width, Y.shape[0]))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def bands(self):
        return self.data.shape[2]

    @property
    def n_pixels(self):
        return self.height * self.width

    def matrix(self):
        """The ``(L, N)`` observation matrix (a copy)."""
        return self.data.reshape(self.n_pixels, self.bands).T.copy()


def check_endmembers(M, name="endmember matrix"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D (L, P), got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(M < 0):
        raise ValueError(f"{name} has negative entries")
    zero = np.flatnonzero(np.linalg.norm(M, axis=0) == 0)
    if zero.size:
        raise DegenerateSpectrumError(f"{name} column {zero[0]} is the zero vector")
    return M


def check_abundances(A, atol_neg=1e-9, atol_sum=1e-6):
    """Validate a ``(P, N)`` abundance matrix against the simplex constraints."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"abundance matrix must be 2-D (P, N), got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("abundance matrix has non-finite entries")
    neg = np.argwhere(A < -atol_neg)
    if neg.size:
        p, n = neg[0]
        raise ValueError(f"negative abundance {A[p, n]:.3g} (material {p}, pixel {n})")
    bad = np.flatnonzero(np.abs(A.sum(axis=0) - 1.0) > atol_sum)
    if bad.size:
        n = bad[0]
        raise ValueError(f"abundances of pixel {n} sum to {A[:, n].sum():.9g}, not 1")
    return A


def _angle(u, v, axis=0):
    # half-angle form of arccos(u.v) for unit vectors; exact 0 for equal inputs
    return 2.0 * np.arctan2(np.linalg.norm(u - v, axis=axis), np.linalg.norm(u + v, axis=axis))


def spectral_angle(a, b):
    """Angle in radians between two spectra."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateSpectrumError("spectral angle undefined for a zero-norm spectrum")
    return float(_angle(a / na, b / nb))


def spectral_angles(X, ref):
    """Angles between every column of ``X`` (L, N) and the spectrum ``ref``.

    Zero-norm columns yield NaN.
    """
    X = np.asarray(X, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    nr = np.linalg.norm(ref)
    if nr == 0:
        raise DegenerateSpectrumError("reference spectrum has zero norm")
    nx = np.linalg.norm(X, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = _angle(X / nx, (ref / nr)[:, None])
    out[nx == 0] = np.nan
    return out


def nrmse(truth, estimate):
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    den = np.sum(truth**2)
    if den == 0:
        raise ValueError("NRMSE undefined for an all-zero reference")
    return float(np.sqrt(np.sum((truth - estimate) ** 2) / den))


def sam_metric(truth, estimate):
    """Per-pixel sum over materials of spectral angles, averaged over pixels.

    Both tensors are ``(L, P, N)``.  Note the sum (not mean) over materials.
    """
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape or truth.ndim != 3:
        raise ValueError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    nt = np.linalg.norm(truth, axis=0)
    ne = np.linalg.norm(estimate, axis=0)
    for arr, label in ((nt, "true"), (ne, "estimated")):
        zero = np.argwhere(arr == 0)
        if zero.size:
            p, n = zero[0]
            raise DegenerateSpectrumError(
                f"{label} signature of material {p} at pixel {n} has zero norm")
    angles = _angle(truth / nt, estimate / ne)
    return float(angles.sum(axis=0).mean())


def reconstruct_image(em, A, height, width):
    """Pixel n of the result is ``em[:, :, n] @ A[:, n]``."""
    em = np.asarray(em, dtype=np.float64)
    A = check_abundances(A)
    L, P, N = em.shape
    if A.shape != (P, N):
        raise ValueError(f"abundances {A.shape} do not match endmember tensor {em.shape}")
    if N != height * width:
        raise ValueError(f"N={N} does not match {height}x{width}")
    return HyperCube.from_matrix(np.einsum("lpn,pn->ln", em, A), height, width)


def match_materials(true_em, est_em):
    """Greedy spectral-angle matching between the columns of two ``(L, P)`` matrices.

    Returns ``perm`` such that ``est_em[:, perm]`` lines up with ``true_em``.
    """
    true_em = np.asarray(true_em, dtype=np.float64)
    est_em = np.asarray(est_em, dtype=np.float64)
    if true_em.shape != est_em.shape:
        raise ValueError(f"shape mismatch: {true_em.shape} vs {est_em.shape}")
    P = true_em.shape[1]
    ang = np.array([[spectral_angle(true_em[:, i], est_em[:, j]) for j in range(P)]
                    for i in range(P)])
    perm = np.full(P, -1)
    for _ in range(P):
        i, j = np.unravel_index(np.argmin(ang), ang.shape)
        perm[i] = j
        ang[i, :] = np.inf
        ang[:, j] = np.inf
    return perm
