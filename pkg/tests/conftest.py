import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_simplex(rng, P, N):
    return rng.dirichlet(np.ones(P), size=N).T


def active_set_qp(G, b):
    """Minimise 0.5 x'Gx - b'x over the simplex by enumerating supports.

    For every non-empty support S solve the equality-constrained problem on S
    (KKT system with one multiplier) and keep the best feasible candidate.
    """
    P = len(b)
    best, best_val = None, np.inf
    for mask in range(1, 2**P):
        S = [i for i in range(P) if mask >> i & 1]
        k = len(S)
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = G[np.ix_(S, S)]
        K[:k, k] = 1.0
        K[k, :k] = 1.0
        rhs = np.concatenate([b[S], [1.0]])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        if np.any(sol[:k] < -1e-12):
            continue
        x = np.zeros(P)
        x[S] = np.maximum(sol[:k], 0.0)
        x /= x.sum()
        val = 0.5 * x @ G @ x - b @ x
        if val < best_val - 1e-15:
            best, best_val = x, val
    return best


def relu_margin(params, x):
    # smallest |pre-activation| at a relu unit
    h, m = x, np.inf
    for W, b, act in zip(params.weights, params.biases, params.activations):
        s = h @ W + b
        if act == "relu":
            m = min(m, np.min(np.abs(s)))
            h = np.maximum(s, 0)
        elif act == "sigmoid":
            h = 1 / (1 + np.exp(-s))
        else:
            h = s
    return m
