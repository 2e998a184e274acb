"""Hot numeric kernels, each in a numba and a numpy flavour.

The public names at the bottom of the module dispatch on
:data:`deepgun._accel.USE_NUMBA`.  Both flavours are importable directly
(``NUMBA_KERNELS`` / ``NUMPY_KERNELS``) so tests and the benchmark can compare
them side by side.

Conventions: abundance-like matrices are ``(P, N)`` with pixels in columns,
spectra matrices are ``(L, N)``.  Packed MLP parameters are a flat float64
vector holding, for every layer, a row-major ``(in, out)`` weight block
followed by the ``out`` biases.  Activation codes: 0 relu, 1 sigmoid,
2 linear.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

RELU, SIGMOID, LINEAR = 0, 1, 2


# ---------------------------------------------------------------------------
# simplex projection
# ---------------------------------------------------------------------------

@njit
def _nb_project_vec(v, out, u):
    # u: scratch of len(v); insertion sort is fine for a handful of materials
    P = v.shape[0]
    for i in range(P):
        x = v[i]
        j = i
        while j > 0 and u[j - 1] < x:
            u[j] = u[j - 1]
            j -= 1
        u[j] = x
    css = 0.0
    theta = 0.0
    for j in range(P):
        css += u[j]
        t = (css - 1.0) / (j + 1)
        if u[j] - t > 0.0:
            theta = t
    s = 0.0
    for p in range(P):
        x = v[p] - theta
        if x < 0.0:
            x = 0.0
        out[p] = x
        s += x
    for p in range(P):
        out[p] /= s


@njit
def _nb_project_simplex_cols(V):
    P, N = V.shape
    out = np.empty_like(V)
    v = np.empty(P)
    w = np.empty(P)
    u = np.empty(P)
    for n in range(N):
        for p in range(P):
            v[p] = V[p, n]
        _nb_project_vec(v, w, u)
        for p in range(P):
            out[p, n] = w[p]
    return out


def _np_project_simplex_cols(V):
    P, N = V.shape
    u = -np.sort(-V, axis=0)
    css = np.cumsum(u, axis=0) - 1.0
    ind = np.arange(1, P + 1)[:, None]
    cond = u - css / ind > 0
    rho = P - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[rho, np.arange(N)] / (rho + 1)
    out = np.maximum(V - theta, 0.0)
    out /= out.sum(axis=0)
    return out


# ---------------------------------------------------------------------------
# FCLS by projected gradient
# ---------------------------------------------------------------------------

@njit
def _nb_fcls_cols(G, B, c, A0, step, tol, max_iter):
    # minimise 0.5 a'Ga - b'a + 0.5 c per column, a on the simplex
    P, N = B.shape
    A = np.empty((P, N))
    a = np.empty(P)
    g = np.empty(P)
    w = np.empty(P)
    u = np.empty(P)
    for n in range(N):
        for p in range(P):
            a[p] = A0[p, n]
        f_old = 0.0
        for p in range(P):
            s = 0.0
            for q in range(P):
                s += G[p, q] * a[q]
            g[p] = s - B[p, n]
            f_old += a[p] * (0.5 * s - B[p, n])
        f_old += 0.5 * c[n]
        for it in range(max_iter):
            for p in range(P):
                w[p] = a[p] - step * g[p]
            _nb_project_vec(w, a, u)
            f_new = 0.0
            for p in range(P):
                s = 0.0
                for q in range(P):
                    s += G[p, q] * a[q]
                g[p] = s - B[p, n]
                f_new += a[p] * (0.5 * s - B[p, n])
            f_new += 0.5 * c[n]
            if f_old <= 0.0 or abs(f_old - f_new) < tol * f_old:
                break
            f_old = f_new
        for p in range(P):
            A[p, n] = a[p]
    return A


def _np_fcls_cols(G, B, c, A0, step, tol, max_iter):
    A = A0.copy()
    live = np.arange(B.shape[1])
    GA = G @ A
    f_old = np.einsum("pn,pn->n", A, 0.5 * GA - B) + 0.5 * c
    for _ in range(max_iter):
        if live.size == 0:
            break
        a = A[:, live]
        a = _np_project_simplex_cols(a - step * (GA[:, live] - B[:, live]))
        A[:, live] = a
        ga = G @ a
        GA[:, live] = ga
        f_new = np.einsum("pn,pn->n", a, 0.5 * ga - B[:, live]) + 0.5 * c[live]
        fo = f_old[live]
        done = (fo <= 0.0) | (np.abs(fo - f_new) < tol * fo)
        f_old[live] = f_new
        live = live[~done]
    return A


# ---------------------------------------------------------------------------
# spatial first differences on an (P, H, W) stack, replicate boundary
# ---------------------------------------------------------------------------

@njit
def _nb_grad_h(X):
    P, H, W = X.shape
    out = np.zeros_like(X)
    for p in range(P):
        for i in range(H):
            for j in range(W - 1):
                out[p, i, j] = X[p, i, j + 1] - X[p, i, j]
    return out


@njit
def _nb_grad_v(X):
    P, H, W = X.shape
    out = np.zeros_like(X)
    for p in range(P):
        for i in range(H - 1):
            for j in range(W):
                out[p, i, j] = X[p, i + 1, j] - X[p, i, j]
    return out


@njit
def _nb_grad_h_adj(D):
    P, H, W = D.shape
    out = np.zeros_like(D)
    for p in range(P):
        for i in range(H):
            for j in range(W - 1):
                out[p, i, j] -= D[p, i, j]
                out[p, i, j + 1] += D[p, i, j]
    return out


@njit
def _nb_grad_v_adj(D):
    P, H, W = D.shape
    out = np.zeros_like(D)
    for p in range(P):
        for i in range(H - 1):
            for j in range(W):
                out[p, i, j] -= D[p, i, j]
                out[p, i + 1, j] += D[p, i, j]
    return out


def _np_grad_h(X):
    out = np.zeros_like(X)
    out[:, :, :-1] = X[:, :, 1:] - X[:, :, :-1]
    return out


def _np_grad_v(X):
    out = np.zeros_like(X)
    out[:, :-1, :] = X[:, 1:, :] - X[:, :-1, :]
    return out


def _np_grad_h_adj(D):
    out = np.zeros_like(D)
    out[:, :, :-1] -= D[:, :, :-1]
    out[:, :, 1:] += D[:, :, :-1]
    return out


def _np_grad_v_adj(D):
    out = np.zeros_like(D)
    out[:, :-1, :] -= D[:, :-1, :]
    out[:, 1:, :] += D[:, :-1, :]
    return out


# ---------------------------------------------------------------------------
# group soft threshold (column-wise l2 shrinkage)
# ---------------------------------------------------------------------------

@njit
def _nb_group_shrink(X, tau):
    P, N = X.shape
    out = np.zeros_like(X)
    for n in range(N):
        s = 0.0
        for p in range(P):
            s += X[p, n] * X[p, n]
        s = np.sqrt(s)
        if s > tau:
            k = 1.0 - tau / s
            for p in range(P):
                out[p, n] = k * X[p, n]
    return out


def _np_group_shrink(X, tau):
    nrm = np.sqrt(np.einsum("pn,pn->n", X, X))
    k = np.zeros_like(nrm)
    big = nrm > tau
    k[big] = 1.0 - tau / nrm[big]
    return X * k


# ---------------------------------------------------------------------------
# per-pixel Gram matvec: out[:, n] = G[n] @ X[:, n]
# ---------------------------------------------------------------------------

@njit
def _nb_batched_matvec(G, X):
    N, P, _ = G.shape
    out = np.empty((P, N))
    for n in range(N):
        for p in range(P):
            s = 0.0
            for q in range(P):
                s += G[n, p, q] * X[q, n]
            out[p, n] = s
    return out


def _np_batched_matvec(G, X):
    return np.einsum("npq,qn->pn", G, X)


# ---------------------------------------------------------------------------
# latent objective for one pixel: decoders packed one row per material
# ---------------------------------------------------------------------------

@njit
def _nb_latent_value_grad(params, dims, acts, Z, a, y, Z0, lam):
    P, K = Z.shape
    nl = acts.shape[0]
    L = dims[nl]
    maxw = 0
    for i in range(nl + 1):
        if dims[i] > maxw:
            maxw = dims[i]
    hs = np.zeros((P, nl + 1, maxw))
    r = -y.copy()
    for p in range(P):
        for k in range(K):
            hs[p, 0, k] = Z[p, k]
        off = 0
        for l in range(nl):
            din = dims[l]
            dout = dims[l + 1]
            boff = off + din * dout
            for o in range(dout):
                s = params[p, boff + o]
                for i in range(din):
                    s += hs[p, l, i] * params[p, off + i * dout + o]
                if acts[l] == 0:
                    s = s if s > 0.0 else 0.0
                elif acts[l] == 1:
                    s = 1.0 / (1.0 + np.exp(-s))
                hs[p, l + 1, o] = s
            off = boff + dout
        for j in range(L):
            r[j] += a[p] * hs[p, nl, j]
    value = 0.0
    for j in range(L):
        value += r[j] * r[j]
    reg = 0.0
    for p in range(P):
        for k in range(K):
            d = Z[p, k] - Z0[p, k]
            reg += d * d
    value = 0.5 * value + 0.5 * lam * reg

    grad = np.empty((P, K))
    delta = np.empty(maxw)
    gin = np.empty(maxw)
    offs = np.empty(nl, dtype=np.int64)
    for p in range(P):
        off = 0
        for l in range(nl):
            offs[l] = off
            off += dims[l] * dims[l + 1] + dims[l + 1]
        for j in range(L):
            delta[j] = a[p] * r[j]
        for l in range(nl - 1, -1, -1):
            din = dims[l]
            dout = dims[l + 1]
            # d act at layer output
            for o in range(dout):
                h = hs[p, l + 1, o]
                if acts[l] == 0:
                    if h <= 0.0:
                        delta[o] = 0.0
                elif acts[l] == 1:
                    delta[o] *= h * (1.0 - h)
            off = offs[l]
            for i in range(din):
                s = 0.0
                for o in range(dout):
                    s += params[p, off + i * dout + o] * delta[o]
                gin[i] = s
            for i in range(din):
                delta[i] = gin[i]
        for k in range(K):
            grad[p, k] = delta[k] + lam * (Z[p, k] - Z0[p, k])
    return value, grad


def _np_latent_value_grad(params, dims, acts, Z, a, y, Z0, lam):
    P, K = Z.shape
    nl = acts.shape[0]
    caches = []
    r = -np.asarray(y, dtype=np.float64)
    for p in range(P):
        h = Z[p]
        hs = [h]
        off = 0
        for l in range(nl):
            din, dout = dims[l], dims[l + 1]
            W = params[p, off:off + din * dout].reshape(din, dout)
            b = params[p, off + din * dout:off + din * dout + dout]
            off += din * dout + dout
            s = h @ W + b
            if acts[l] == RELU:
                h = np.maximum(s, 0.0)
            elif acts[l] == SIGMOID:
                h = 1.0 / (1.0 + np.exp(-s))
            else:
                h = s
            hs.append(h)
        caches.append(hs)
        r = r + a[p] * h
    dz = Z - Z0
    value = 0.5 * float(r @ r) + 0.5 * lam * float(np.sum(dz * dz))
    grad = np.empty((P, K))
    for p in range(P):
        hs = caches[p]
        delta = a[p] * r
        offs = []
        off = 0
        for l in range(nl):
            offs.append(off)
            off += dims[l] * dims[l + 1] + dims[l + 1]
        for l in range(nl - 1, -1, -1):
            din, dout = dims[l], dims[l + 1]
            h = hs[l + 1]
            if acts[l] == RELU:
                delta = np.where(h > 0.0, delta, 0.0)
            elif acts[l] == SIGMOID:
                delta = delta * h * (1.0 - h)
            W = params[p, offs[l]:offs[l] + din * dout].reshape(din, dout)
            delta = W @ delta
        grad[p] = delta + lam * dz[p]
    return value, grad


NUMBA_KERNELS = {
    "project_simplex_cols": _nb_project_simplex_cols,
    "fcls_cols": _nb_fcls_cols,
    "grad_h": _nb_grad_h,
    "grad_v": _nb_grad_v,
    "grad_h_adj": _nb_grad_h_adj,
    "grad_v_adj": _nb_grad_v_adj,
    "group_shrink": _nb_group_shrink,
    "batched_matvec": _nb_batched_matvec,
    "latent_value_grad": _nb_latent_value_grad,
}

NUMPY_KERNELS = {
    "project_simplex_cols": _np_project_simplex_cols,
    "fcls_cols": _np_fcls_cols,
    "grad_h": _np_grad_h,
    "grad_v": _np_grad_v,
    "grad_h_adj": _np_grad_h_adj,
    "grad_v_adj": _np_grad_v_adj,
    "group_shrink": _np_group_shrink,
    "batched_matvec": _np_batched_matvec,
    "latent_value_grad": _np_latent_value_grad,
}

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

project_simplex_cols = _ACTIVE["project_simplex_cols"]
fcls_cols = _ACTIVE["fcls_cols"]
grad_h = _ACTIVE["grad_h"]
grad_v = _ACTIVE["grad_v"]
grad_h_adj = _ACTIVE["grad_h_adj"]
grad_v_adj = _ACTIVE["grad_v_adj"]
group_shrink = _ACTIVE["group_shrink"]
batched_matvec = _ACTIVE["batched_matvec"]
latent_value_grad = _ACTIVE["latent_value_grad"]
