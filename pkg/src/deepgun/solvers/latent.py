"""Per-pixel latent code estimation."""

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..neural import VaeModel, decode, decode_with_input_grad
from .bfgs import bfgs_minimize


@dataclass(frozen=True)
class PackedDecoders:
    """Decoder parameters of P same-shaped VAEs, one row per material."""

    params: np.ndarray      # (P, n_params)
    dims: np.ndarray        # (n_layers + 1,)
    acts: np.ndarray        # (n_layers,)

    @classmethod
    def from_models(cls, models):
        decs = [m.decoder for m in models]
        dims = decs[0].dims
        if any(d.dims != dims or d.activations != decs[0].activations for d in decs):
            raise ValueError("decoders must share one architecture to be packed")
        return cls(np.ascontiguousarray(np.stack([d.packed() for d in decs])),
                   np.array(dims, dtype=np.int64), decs[0].activation_codes())


def _decode(model, z):
    return decode(model, z) if isinstance(model, VaeModel) else model.decode(z)


def _vjp(model, z, g):
    if isinstance(model, VaeModel):
        return decode_with_input_grad(model, z, g)
    return model.decode_vjp(z, g)


def latent_objective(models, y, a, z0_ref, lambda_z, packed=None):
    """Return ``fg(zflat) -> (J, grad)`` for one pixel.

    ``J = 0.5 ||y - G(Z) a||^2 + 0.5 lambda_z ||Z - Z0||_F^2`` with ``Z`` the
    ``(P, K)`` reshape of ``zflat`` and ``Z0 = z0_ref.T``.  ``models`` are
    :class:`VaeModel` instances or any object with ``decode(z)`` and
    ``decode_vjp(z, g)`` methods.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    Z0 = np.ascontiguousarray(np.asarray(z0_ref, dtype=np.float64).T)
    P, K = Z0.shape
    lam = float(lambda_z)
    if packed is None and all(isinstance(m, VaeModel) for m in models):
        packed = PackedDecoders.from_models(models)

    if packed is not None:
        def fg(zflat):
            Z = np.ascontiguousarray(zflat, dtype=np.float64).reshape(P, K)
            v, g = kernels.latent_value_grad(packed.params, packed.dims, packed.acts,
                                             Z, a, y, Z0, lam)
            return v, g.ravel()
        return fg

    def fg(zflat):
        Z = np.asarray(zflat, dtype=np.float64).reshape(P, K)
        r = -y.copy()
        for p, m in enumerate(models):
            r += a[p] * _decode(m, Z[p])
        dz = Z - Z0
        g = np.stack([a[p] * _vjp(m, Z[p], r) for p, m in enumerate(models)]) + lam * dz
        return 0.5 * float(r @ r) + 0.5 * lam * float(np.sum(dz * dz)), g.ravel()
    return fg


def solve_z_step(y, a, models, z_init, z0_ref, lambda_z, tol=1e-3, max_iter=100,
                 packed=None, return_result=False):
    """BFGS on one pixel's latent matrix, warm-started at ``z_init`` ``(P, K)``."""
    fg = latent_objective(models, y, a, z0_ref, lambda_z, packed)
    z_init = np.asarray(z_init, dtype=np.float64)
    res = bfgs_minimize(fg, z_init.ravel(), tol=tol, max_iter=max_iter)
    Z = res.x.reshape(z_init.shape)
    return (Z, res) if return_result else Z
