"""Abundance step: pixel-dependent least squares with a spatial l2,1 penalty, by ADMM."""

from dataclasses import dataclass, field

import numpy as np

from .. import kernels


class CGConvergenceError(RuntimeError):
    pass


@dataclass
class AdmmConfig:
    lambda_a: float = 0.01
    rho: float = 1.0
    max_iterations: int = 200
    tol_primal: float = 1e-5
    tol_dual: float = 1e-5
    cg_tol: float = 1e-8
    cg_max_iter: int = 1000

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.tol_primal <= 0 or self.tol_dual <= 0 or self.cg_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.lambda_a < 0:
            raise ValueError("lambda_a must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class AdmmInfo:
    iterations: int = 0
    converged: bool = False
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    cg_iterations: list = field(default_factory=list)
    # augmented Lagrangian before, after the A update and after the V update
    lagrangian: list = field(default_factory=list)


def spatial_gradients(A, height, width):
    """Horizontal and vertical forward differences of every material map, ``(P, N)`` each.

    The last column (horizontal) and last row (vertical) get zero gradient.
    """
    A = np.asarray(A, dtype=np.float64)
    P, N = A.shape
    if N != height * width:
        raise ValueError(f"N={N} does not match {height}x{width}")
    X = np.ascontiguousarray(A).reshape(P, height, width)
    return kernels.grad_h(X).reshape(P, N), kernels.grad_v(X).reshape(P, N)


def spatial_gradients_adjoint(Dh, Dv, height, width):
    """``Hh' Dh + Hv' Dv`` for ``(P, N)`` gradient fields."""
    P, N = Dh.shape
    if N != height * width or Dv.shape != Dh.shape:
        raise ValueError("gradient fields do not match the image size")
    sh = (P, height, width)
    out = kernels.grad_h_adj(np.ascontiguousarray(Dh, dtype=np.float64).reshape(sh))
    out += kernels.grad_v_adj(np.ascontiguousarray(Dv, dtype=np.float64).reshape(sh))
    return out.reshape(P, N)


def l21(X):
    """Sum over columns of column Euclidean norms."""
    return float(np.sum(np.sqrt(np.einsum("pn,pn->n", X, X))))


def _laplacian_diag(height, width):
    j = np.arange(width)
    i = np.arange(height)
    dh = (j < width - 1).astype(float) + (j > 0)
    dv = (i < height - 1).astype(float) + (i > 0)
    return (dv[:, None] + dh[None, :]).ravel()


def _pcg(apply, b, x, precond, tol, max_iter):
    r = b - apply(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0
    z = precond(r)
    p = z.copy()
    rz = np.sum(r * z)
    for it in range(max_iter + 1):
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
        Ap = apply(p)
        alpha = rz / np.sum(p * Ap)
        x = x + alpha * p
        r = r - alpha * Ap
        z = precond(r)
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise CGConvergenceError(
        f"CG did not reach relative residual {tol:g} in {max_iter} iterations "
        f"(final {np.linalg.norm(r) / bnorm:.3e})")


def augmented_lagrangian(Y, em, A, V, D, lambda_a, rho, height, width):
    Hh, Hv = spatial_gradients(A, height, width)
    R = Y - np.einsum("lpn,pn->ln", em, A)
    val = 0.5 * np.sum(R**2) + lambda_a * (l21(V[0]) + l21(V[1]))
    for HA, v, d in zip((Hh, Hv, A), V, D):
        val += 0.5 * rho * (np.sum((HA - v + d) ** 2) - np.sum(d**2))
    return float(val)


def solve_a_step(Y, em, a_init, config, height, width, return_info=False):
    """Minimise ``0.5 sum_n ||y_n - M_n a_n||^2 + lambda_a (||Hh A||_21 + ||Hv A||_21)``
    over column-stochastic ``A``.

    ``Y`` is ``(L, N)`` (or a :class:`~deepgun.core.HyperCube`), ``em`` is the
    ``(L, P, N)`` endmember tensor and ``a_init`` the ``(P, N)`` start.  The
    returned matrix is the simplex-projected splitting variable, so it is
    feasible exactly.
    """
    if hasattr(Y, "matrix"):
        Y = Y.matrix()
    Y = np.asarray(Y, dtype=np.float64)
    em = np.asarray(em, dtype=np.float64)
    L, P, N = em.shape
    if Y.shape != (L, N) or np.shape(a_init) != (P, N) or N != height * width:
        raise ValueError(f"dimension mismatch: Y {Y.shape}, em {em.shape}, "
                         f"a_init {np.shape(a_init)}, image {height}x{width}")
    rho = config.rho
    lam = config.lambda_a
    Gram = np.ascontiguousarray(np.einsum("lpn,lqn->npq", em, em))
    MtY = np.einsum("lpn,ln->pn", em, Y)
    deg = _laplacian_diag(height, width)
    Pinv = np.linalg.inv(Gram + (rho * (deg + 1.0))[:, None, None] * np.eye(P))

    def apply(X):
        Dh, Dv = spatial_gradients(X, height, width)
        return (kernels.batched_matvec(Gram, X)
                + rho * (spatial_gradients_adjoint(Dh, Dv, height, width) + X))

    def precond(R):
        return kernels.batched_matvec(Pinv, np.ascontiguousarray(R))

    A = np.array(a_init, dtype=np.float64)
    Hh, Hv = spatial_gradients(A, height, width)
    V = [Hh, Hv, A.copy()]
    D = [np.zeros((P, N)) for _ in range(3)]
    info = AdmmInfo()
    scale = np.sqrt(P * N)
    track = return_info
    for it in range(1, config.max_iterations + 1):
        if track:
            lag = [augmented_lagrangian(Y, em, A, V, D, lam, rho, height, width)]
        rhs = MtY + rho * (spatial_gradients_adjoint(V[0] - D[0], V[1] - D[1], height, width)
                           + V[2] - D[2])
        A, ncg = _pcg(apply, rhs, A, precond, config.cg_tol, config.cg_max_iter)
        info.cg_iterations.append(ncg)
        if track:
            lag.append(augmented_lagrangian(Y, em, A, V, D, lam, rho, height, width))
        Hh, Hv = spatial_gradients(A, height, width)
        V_old = V
        V = [kernels.group_shrink(Hh + D[0], lam / rho),
             kernels.group_shrink(Hv + D[1], lam / rho),
             kernels.project_simplex_cols(A + D[2])]
        if track:
            lag.append(augmented_lagrangian(Y, em, A, V, D, lam, rho, height, width))
            info.lagrangian.append(lag)
        res = [Hh - V[0], Hv - V[1], A - V[2]]
        for d, r in zip(D, res):
            d += r
        primal = np.sqrt(sum(np.sum(r**2) for r in res)) / scale
        dual = rho * np.linalg.norm(spatial_gradients_adjoint(V[0] - V_old[0], V[1] - V_old[1],
                                                              height, width)
                                    + V[2] - V_old[2]) / scale
        info.iterations = it
        info.primal_residual, info.dual_residual = float(primal), float(dual)
        if primal < config.tol_primal and dual < config.tol_dual:
            info.converged = True
            break
    out = V[2]
    return (out, info) if return_info else out
