"""Fully constrained least squares by projected gradient."""

import numpy as np

from .. import kernels


def fcls(Y, M, tol=1e-10, max_iter=5000, A0=None, polish=True):
    """Minimise ``||y - M a||^2`` over the simplex for each column of ``Y``.

    ``Y`` may be a single spectrum ``(L,)`` or a matrix ``(L, N)``; the result
    has matching shape ``(P,)`` / ``(P, N)``.  The step is ``1/||M'M||_2`` and
    a column stops once its relative objective change drops below ``tol``.
    With ``polish`` the equality-constrained problem on each column's support
    is then solved exactly, and kept when it stays feasible and no worse.
    """
    Y = np.asarray(Y, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    single = Y.ndim == 1
    if single:
        Y = Y[:, None]
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(M))):
        raise ValueError("fcls needs finite inputs")
    if M.shape[0] != Y.shape[0]:
        raise ValueError(f"M has {M.shape[0]} bands, data has {Y.shape[0]}")
    P = M.shape[1]
    N = Y.shape[1]
    G = M.T @ M
    B = M.T @ Y
    c = np.einsum("ln,ln->n", Y, Y)
    lip = np.linalg.norm(G, 2)
    step = 1.0 / lip if lip > 0 else 1.0
    if A0 is None:
        A0 = np.full((P, N), 1.0 / P)
    A = kernels.fcls_cols(G, np.ascontiguousarray(B), c,
                          np.ascontiguousarray(A0, dtype=np.float64), step, tol, max_iter)
    if polish:
        A = _polish(G, B, A)
    return A[:, 0] if single else A


def _objective(G, B, A):
    return np.einsum("pn,pn->n", A, 0.5 * (G @ A) - B)


def _polish(G, B, A):
    # exact solve on each column's support; the gradient loop identifies the
    # support long before it pins down the values
    P = G.shape[0]
    support = A > 0
    keys = support.T @ (1 << np.arange(P))
    out = A.copy()
    for key in np.unique(keys):
        cols = np.flatnonzero(keys == key)
        S = np.flatnonzero(support[:, cols[0]])
        k = S.size
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = G[np.ix_(S, S)]
        K[:k, k] = 1.0
        K[k, :k] = 1.0
        rhs = np.vstack([B[np.ix_(S, cols)], np.ones((1, cols.size))])
        try:
            sol = np.linalg.solve(K, rhs)[:k]
        except np.linalg.LinAlgError:
            continue
        cand = np.zeros((P, cols.size))
        cand[S] = sol
        ok = np.all(sol >= 0, axis=0)
        cand[:, ok] /= cand[:, ok].sum(axis=0)
        ok &= _objective(G, B[:, cols], cand) <= _objective(G, B[:, cols], A[:, cols])
        out[:, cols[ok]] = cand[:, ok]
    return out
