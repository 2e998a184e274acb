"""Synthetic scenes with known abundances and per-pixel endmember variability."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import HyperCube, check_abundances, spectral_angle

VARIABILITY_KINDS = ("dc1", "dc2", "dc3", "none")


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"invalid SNR {self.snr_db}")


@dataclass(frozen=True)
class VariabilityModel:
    """Scaling-field family applied to the base endmembers.

    ``amplitude`` is the half-range of DC1 breakpoint values and the DC2
    field scale; DC3 uses ``max_angle`` and the direct/diffuse weights.
    """

    kind: str = "dc1"
    amplitude: float = 0.2
    n_breakpoints: int = 4
    max_angle: float = math.pi / 6
    direct: float = 0.8
    diffuse: float = 0.2

    def __post_init__(self):
        if self.kind not in VARIABILITY_KINDS:
            raise ValueError(f"unknown variability kind {self.kind!r}; "
                             f"expected one of {VARIABILITY_KINDS}")
        if not 0 <= self.amplitude < 1:
            raise ValueError("amplitude must lie in [0, 1)")
        if self.n_breakpoints < 2:
            raise ValueError("need at least 2 breakpoints")
        if not 0 <= self.max_angle < math.pi / 2:
            raise ValueError("max_angle must lie in [0, pi/2)")
        if self.direct < 0 or self.diffuse < 0 or self.direct + self.diffuse == 0:
            raise ValueError("direct/diffuse weights must be non-negative, not both zero")

    @classmethod
    def default(cls, kind):
        return cls(kind=kind, amplitude=0.15 if kind == "dc2" else 0.2)


@dataclass
class GroundTruth:
    abundances: np.ndarray          # (P, N)
    endmembers: np.ndarray          # (L, P, N)
    base_endmembers: np.ndarray     # (L, P)
    height: int
    width: int
    scaling: np.ndarray = field(default=None, repr=False)


def gen_procedural_endmembers(bands, materials, seed, min_angle=0.1, max_attempts=100):
    """Smooth positive spectra built from Gaussian bumps plus a linear trend."""
    if bands < 8:
        raise ValueError(f"need at least 8 bands, got {bands}")
    if not 1 <= materials <= bands:
        raise ValueError(f"materials must be in [1, {bands}], got {materials}")
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, bands)
    for _ in range(max_attempts):
        M = np.empty((bands, materials))
        for p in range(materials):
            k = rng.integers(3, 7)
            centers = rng.uniform(0.0, 1.0, k)
            widths = rng.uniform(0.05, 0.3, k)
            heights = rng.uniform(0.2, 1.0, k)
            s = (heights[:, None] * np.exp(-0.5 * ((x - centers[:, None]) / widths[:, None]) ** 2)).sum(0)
            s += rng.uniform(-0.5, 0.5) * x
            s = (s - s.min()) / (s.max() - s.min())
            lo = rng.uniform(0.05, 0.3)
            hi = rng.uniform(0.6, 0.95)
            M[:, p] = lo + (hi - lo) * s
        ok = all(spectral_angle(M[:, i], M[:, j]) >= min_angle
                 for i in range(materials) for j in range(i))
        if ok:
            return M
    raise RuntimeError(f"could not draw {materials} spectra separated by {min_angle} rad "
                       f"in {max_attempts} attempts")


def _smooth_field(rng, shape, sigma):
    f = gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    sd = f.std()
    return f / sd if sd > 0 else f


def gen_abundance_maps(height, width, materials, seed, pure_fraction=0.02, pure_level=0.97):
    """Spatially correlated abundances with injected near-pure regions."""
    if materials < 1 or height < 1 or width < 1:
        raise ValueError("height, width and materials must be positive")
    N = height * width
    if materials == 1:
        return np.ones((1, N))
    rng = np.random.default_rng(seed)
    sigma = min(height, width) / 8
    fields = np.stack([_smooth_field(rng, (height, width), sigma).ravel()
                       for _ in range(materials)])
    A = fields - fields.min(axis=1, keepdims=True)
    tot = A.sum(axis=0)
    # a pixel at every field's minimum gets an even split
    A[:, tot == 0] = 1.0
    A = A / A.sum(axis=0)
    n_pure = math.ceil(pure_fraction * N)
    taken = np.zeros(N, dtype=bool)
    for p in range(materials):
        order = np.argsort(-fields[p], kind="stable")
        sel = order[~taken[order]][:n_pure]
        taken[sel] = True
        rest = np.delete(np.arange(materials), p)
        others = A[np.ix_(rest, sel)]
        tot = others.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(tot > 0, others / tot, 1.0 / (materials - 1))
        A[np.ix_(rest, sel)] = (1.0 - pure_level) * share
        A[p, sel] = pure_level
    A /= A.sum(axis=0)
    return check_abundances(A, atol_neg=0.0, atol_sum=1e-12)


def scaling_field(model, bands, materials, height, width, seed):
    """Strictly positive multiplicative factors, shape ``(L, P, N)``."""
    N = height * width
    rng = np.random.default_rng(seed)
    if model.kind == "none":
        return np.ones((bands, materials, N))
    if model.kind == "dc1":
        psi = np.empty((bands, materials, N))
        grid = np.arange(bands, dtype=np.float64)
        nb = model.n_breakpoints
        pos = np.sort(rng.uniform(0, bands - 1, size=(N, materials, nb)), axis=-1)
        val = rng.uniform(1 - model.amplitude, 1 + model.amplitude, size=(N, materials, nb))
        for n in range(N):
            for p in range(materials):
                psi[:, p, n] = np.interp(grid, pos[n, p], val[n, p])
        return psi
    if model.kind == "dc2":
        size = min(height, width)
        sig = (size / 6, size / 6, bands / 10)
        psi = np.empty((bands, materials, N))
        for p in range(materials):
            g = _smooth_field(rng, (height, width, bands), sig)
            psi[:, p, :] = np.maximum(1.0 + model.amplitude * g, 0.5).reshape(N, bands).T
        return psi
    # dc3: viewing-geometry illumination factor, shared by all materials
    sigma = min(height, width) / 8
    f = _smooth_field(rng, (height, width), sigma).ravel()
    span = f.max() - f.min()
    u = (f - f.min()) / span if span > 0 else np.zeros_like(f)
    theta = u * model.max_angle
    ratio = (model.direct * np.cos(theta) + model.diffuse) / (model.direct + model.diffuse)
    return np.broadcast_to(ratio, (bands, materials, N)).copy()


def apply_variability(m0, model, height, width, seed):
    """Per-pixel endmember tensor ``psi * M0`` of shape ``(L, P, N)``."""
    m0 = np.asarray(m0, dtype=np.float64)
    L, P = m0.shape
    if model.kind == "none":
        return np.repeat(m0[:, :, None], height * width, axis=2)
    return scaling_field(model, L, P, height, width, seed) * m0[:, :, None]


def make_ground_truth(height, width, bands, materials, model, seed):
    """Draw base endmembers, abundances and variable endmembers from one seed."""
    ss = np.random.SeedSequence(seed)
    s_em, s_ab, s_var = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    m0 = gen_procedural_endmembers(bands, materials, s_em)
    A = gen_abundance_maps(height, width, materials, s_ab)
    em = apply_variability(m0, model, height, width, s_var)
    return GroundTruth(abundances=A, endmembers=em, base_endmembers=m0,
                       height=height, width=width)


def noise_seed(seed):
    """Noise seed paired with ``make_ground_truth(..., seed)``, independent of its streams."""
    return int(np.random.SeedSequence(seed).spawn(4)[3].generate_state(1)[0])


def mix(gt):
    """Noiseless ``(L, N)`` mixture ``M_n a_n``."""
    return np.einsum("lpn,pn->ln", gt.endmembers, gt.abundances)


def gen_cube(gt, noise):
    """Mix the ground truth and add white Gaussian noise at exactly ``noise.snr_db``.

    Returns ``(cube, noise_matrix)``; the noise matrix is ``(L, N)``.
    """
    S = mix(gt)
    if S.shape[1] != gt.height * gt.width:
        raise ValueError("ground truth dimensions disagree")
    if math.isinf(noise.snr_db):
        E = np.zeros_like(S)
    else:
        rng = np.random.default_rng(noise.seed)
        E = rng.standard_normal(S.shape)
        target = np.sum(S**2) / 10 ** (noise.snr_db / 10)
        E *= math.sqrt(target / np.sum(E**2))
    return HyperCube.from_matrix(S + E, gt.height, gt.width), E


def measured_snr(signal, noise):
    return 10 * math.log10(float(np.sum(signal**2)) / float(np.sum(noise**2)))
