"""Alternating latent/abundance minimisation with learned endmember models."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import HyperCube, check_abundances, match_materials, nrmse
from .extraction import extract_pure_pixels, latent_reference, vca
from .neural import TrainConfig, mlp_forward, train_vae
from .solvers import AdmmConfig, PackedDecoders, fcls, l21, solve_a_step, solve_z_step
from .solvers.tv import spatial_gradients

log = logging.getLogger(__name__)

REL_EPS = 1e-12


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


@dataclass
class UnmixConfig:
    materials: int
    lambda_a: float = 0.01
    lambda_z: float = 0.1
    latent_dim: int = 2
    pure_count: int = None              # None: 100, or max(10, ceil(N/10)) when N < 200
    max_outer_iterations: int = 10
    outer_rel_tol: float = 1e-3
    z_tol: float = 1e-3
    z_max_iter: int = 100
    admm_rho: float = 1.0
    admm_max_iterations: int = 200
    admm_tol: float = 1e-5
    epochs: int = 50
    batch_fraction: float = 1.0 / 3.0
    learning_rate: float = 1e-3
    kl_weight: float = 1.0
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.materials < 1:
            raise ValueError("materials must be >= 1")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.lambda_a < 0 or self.lambda_z < 0:
            raise ValueError("regularisation weights must be non-negative")
        if self.max_outer_iterations < 1 or self.outer_rel_tol <= 0 or self.z_tol <= 0:
            raise ValueError("iteration limits and tolerances must be positive")
        if self.pure_count is not None and self.pure_count < 3:
            raise ValueError("pure_count must be at least 3")

    def resolved_pure_count(self, n_pixels):
        if self.pure_count is not None:
            return self.pure_count
        return 100 if n_pixels >= 200 else max(10, -(-n_pixels // 10))

    def train_config(self, seed):
        return TrainConfig(epochs=self.epochs, batch_fraction=self.batch_fraction,
                           learning_rate=self.learning_rate, kl_weight=self.kl_weight,
                           seed=seed)

    def admm_config(self):
        return AdmmConfig(lambda_a=self.lambda_a, rho=self.admm_rho,
                          max_iterations=self.admm_max_iterations,
                          tol_primal=self.admm_tol, tol_dual=self.admm_tol)


@dataclass
class UnmixResult:
    abundances: np.ndarray          # (P, N)
    latents: np.ndarray             # (N, P, K)
    endmembers: np.ndarray          # (L, P, N), in the cube's units
    objective_history: list         # J at the start, then after every outer iteration
    iterations_run: int
    m0: np.ndarray                  # (L, P), cube units
    z0: np.ndarray                  # (K, P)
    a_init: np.ndarray              # FCLS start (P, N)
    models: list = field(repr=False)
    scale: float = 1.0              # data were divided by this before learning
    half_step_history: list = field(default_factory=list, repr=False)
    timings: dict = field(default_factory=dict)


def stage_seeds(seed, materials):
    """Independent seeds for VCA and each material's VAE, derived from one integer."""
    ss = np.random.SeedSequence(seed).spawn(materials + 1)
    vals = [int(s.generate_state(1)[0]) for s in ss]
    return vals[0], vals[1:]


def data_scale(Y):
    """Divisor bringing reflectances into [0, 1] (1 when already there)."""
    top = float(np.max(Y))
    return top if top > 1.0 else 1.0


def decode_all(models, Z):
    """Decode every pixel's latents: ``Z`` ``(N, P, K)`` -> endmember tensor ``(L, P, N)``."""
    N, P, _ = Z.shape
    cols = [mlp_forward(m.decoder, Z[:, p, :])[0].T for p, m in enumerate(models)]
    return np.stack(cols, axis=1)


def objective(Y, models, A, Z, z0, lambda_a, lambda_z, height, width):
    """``0.5 sum ||y_n - G(Z_n) a_n||^2 + lambda_a (||Hh A||_21 + ||Hv A||_21)
    + 0.5 lambda_z sum ||Z_n - Z0||_F^2``; infeasible ``A`` raises."""
    if isinstance(Y, HyperCube):
        Y = Y.matrix()
    try:
        check_abundances(A)
    except ValueError as exc:
        raise ValueError(f"abundances are infeasible: {exc}") from None
    em = decode_all(models, Z)
    R = Y - np.einsum("lpn,pn->ln", em, A)
    Hh, Hv = spatial_gradients(A, height, width)
    dz = Z - np.asarray(z0).T[None]
    return float(0.5 * np.sum(R**2) + lambda_a * (l21(Hh) + l21(Hv))
                 + 0.5 * lambda_z * np.sum(dz**2))


def _rel_change(new, old):
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), REL_EPS))


def _z_sweep(Y, A, models, packed, Z, z0, config):
    N = Y.shape[1]

    def one(n):
        return solve_z_step(Y[:, n], A[:, n], models, Z[n], z0, config.lambda_z,
                            tol=config.z_tol, max_iter=config.z_max_iter, packed=packed)

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as ex:
            rows = list(ex.map(one, range(N)))
    else:
        rows = [one(n) for n in range(N)]
    return np.stack(rows)


def train_models(bundles, config, seeds):
    models = []
    for p, spectra in enumerate(bundles):
        spectra = np.clip(np.asarray(spectra, dtype=np.float64), 0.0, 1.0)
        models.append(train_vae(spectra, config.train_config(seeds[p]), config.latent_dim))
    return models


class _Stages:
    """Runs named pipeline stages, timing them and tagging failures."""

    def __init__(self):
        self.timings = {}

    def __call__(self, name, fn):
        t = time.perf_counter()
        try:
            out = fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t
        return out


def _setup(cube, config, m0, stage):
    """Scaled data and the scaled reference matrix, shared by every entry point."""
    Yraw = cube.matrix()
    L, N = Yraw.shape
    P = config.materials
    scale = data_scale(Yraw)
    vca_seed, train_seeds = stage_seeds(config.seed, P)
    if m0 is None:
        # VCA only picks pixel indices, so running it on the raw cube and
        # scaling afterwards gives the same numbers as a supplied M0 would
        m0 = stage("vca", lambda: vca(Yraw, P, seed=vca_seed)[0])
    m0 = np.asarray(m0, dtype=np.float64)
    if m0.shape != (L, P):
        raise StageError("vca", f"reference matrix has shape {m0.shape}, expected {(L, P)}")
    return Yraw / scale, m0, scale, train_seeds


def _bundles(Y, M0, cube, config, library, scale, stage):
    if library is not None:
        if len(library) != config.materials:
            raise StageError("extract", f"{len(library)} library sets for "
                                        f"{config.materials} materials")
        sets = [np.asarray(b, dtype=np.float64) / scale for b in library]
        # library order is the user's; line the sets up with the reference columns
        means = np.stack([b.mean(axis=0) for b in sets], axis=1)
        if means.shape != M0.shape:
            raise StageError("extract", f"library spectra have {means.shape[0]} bands, "
                                        f"cube has {M0.shape[0]}")
        return [sets[j] for j in match_materials(M0, means)]
    return [s.spectra for s in _pure_sets(Y, M0, cube, config, stage)]


def _pure_sets(Y, M0, cube, config, stage):
    count = config.resolved_pure_count(Y.shape[1])
    cube_s = HyperCube.from_matrix(Y, cube.height, cube.width)
    return stage("extract", lambda: extract_pure_pixels(cube_s, M0, count))


def reference_and_bundles(cube, config, m0=None):
    """The reference matrix (cube units) and the pure-pixel sets the pipeline would use."""
    stage = _Stages()
    Y, m0, scale, _ = _setup(cube, config, m0, stage)
    return m0, _pure_sets(Y, m0 / scale, cube, config, stage), stage.timings


def fit_endmember_models(cube, config, m0=None, library=None):
    """Reference matrix, bundles and trained models exactly as :func:`run_deepgun` builds them.

    Returns ``(models, m0, bundles, timings)`` with ``m0`` in cube units and
    the bundles as ``(S_p, L)`` arrays in the scaled units the models saw.
    """
    stage = _Stages()
    Y, m0, scale, train_seeds = _setup(cube, config, m0, stage)
    bundles = _bundles(Y, m0 / scale, cube, config, library, scale, stage)
    models = stage("train", lambda: train_models(bundles, config, train_seeds))
    return models, m0, bundles, stage.timings


def run_deepgun(cube, config, m0=None, models=None, library=None):
    """Full pipeline on a :class:`HyperCube`.

    ``m0`` (cube units) skips VCA, ``models`` skips bundle extraction and
    training, ``library`` (a list of ``(S_p, L)`` arrays in cube units) replaces
    the image bundles as training data.
    """
    t_start = time.perf_counter()
    stage = _Stages()
    timings = stage.timings
    H, W = cube.height, cube.width
    N = cube.n_pixels
    P = config.materials
    Y, m0, scale, train_seeds = _setup(cube, config, m0, stage)
    M0 = m0 / scale
    A0 = stage("fcls", lambda: fcls(Y, M0))
    if models is None:
        bundles = _bundles(Y, M0, cube, config, library, scale, stage)
        models = stage("train", lambda: train_models(bundles, config, train_seeds))
    if len(models) != P:
        raise StageError("train", f"{len(models)} models for {P} materials")
    z0 = stage("latent_reference", lambda: latent_reference(models, M0))
    packed = PackedDecoders.from_models(models)
    admm = config.admm_config()

    def J(A_, Z_):
        return objective(Y, models, A_, Z_, z0, config.lambda_a, config.lambda_z, H, W)

    A = A0.copy()
    Z = np.repeat(z0.T[None], N, axis=0)
    history = [J(A, Z)]
    half = [history[0]]
    it = 0
    t_loop = time.perf_counter()
    for it in range(1, config.max_outer_iterations + 1):
        Z_new = stage("z_step", lambda: _z_sweep(Y, A, models, packed, Z, z0, config))
        j_z = J(A, Z_new)
        if j_z > half[-1]:
            # per-pixel BFGS never increases its own term; guard against round-off
            Z_new, j_z = Z, half[-1]
        half.append(j_z)
        em = decode_all(models, Z_new)
        A_new = stage("a_step", lambda: solve_a_step(Y, em, A, admm, H, W))
        j_a = J(A_new, Z_new)
        if j_a > j_z:
            # ADMM stopped short of the previous iterate's value; keep the old abundances
            A_new, j_a = A, j_z
        half.append(j_a)
        dA, dZ = _rel_change(A_new, A), _rel_change(Z_new, Z)
        A, Z = A_new, Z_new
        history.append(j_a)
        log.info("iter=%d J=%.10g dA=%.3e dZ=%.3e", it, j_a, dA, dZ)
        if max(dA, dZ) < config.outer_rel_tol:
            break
    timings["alternation"] = time.perf_counter() - t_loop
    timings["total"] = time.perf_counter() - t_start
    em = decode_all(models, Z) * scale
    return UnmixResult(abundances=A, latents=Z, endmembers=em, objective_history=history,
                       iterations_run=it, m0=m0, z0=z0, a_init=A0, models=models,
                       scale=scale, half_step_history=half, timings=timings)


def aligned_abundance_error(result_m0, result_a, truth_m0, truth_a):
    """NRMSE of abundances after matching estimated to true materials by spectral angle."""
    perm = match_materials(truth_m0, result_m0)
    return nrmse(truth_a, result_a[perm])


def latent_dim_sweep(cube, truth, config, k_values, csv_path=None):
    """Run the pipeline for each latent dimension; returns ``[(K, NRMSE_A), ...]``."""
    from dataclasses import replace

    rows = []
    for K in k_values:
        res = run_deepgun(cube, replace(config, latent_dim=int(K)))
        err = aligned_abundance_error(res.m0, res.abundances, truth.base_endmembers,
                                      truth.abundances)
        rows.append((int(K), err))
    if csv_path is not None:
        with open(csv_path, "w") as fh:
            for K, err in rows:
                fh.write(f"{K},{err:.17g}\n")
    return rows
