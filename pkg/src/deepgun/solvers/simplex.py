"""Euclidean projection onto the unit simplex."""

import numpy as np

from .. import kernels


def project_simplex(v):
    """Project a vector ``(P,)`` or each column of a ``(P, N)`` matrix onto the simplex.

    Sort-and-threshold; the result is renormalised so each column sums to 1.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite values")
    if v.ndim == 1:
        return kernels.project_simplex_cols(v[:, None].copy())[:, 0]
    return kernels.project_simplex_cols(np.ascontiguousarray(v))
