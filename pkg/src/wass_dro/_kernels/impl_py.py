"""NumPy reference implementation of the hot per-particle kernels.

These three routines dominate the inner ascent when the expressive
residual-feature map family is in play (N particles x m centers per
gradient evaluation). The Cython build in `_speedups.pyx` fuses the loops;
this module is the always-available fallback and the correctness oracle
for the compiled path.
"""

import numpy as np

BACKEND = "python"


def rbf_weights(points, centers, inv_two_h2):
    """Feature matrix Phi[i, j] = exp(-||x_i - c_j||^2 * inv_two_h2)."""
    diff = points[:, None, :] - centers[None, :, :]
    d2 = np.einsum("nmd,nmd->nm", diff, diff)
    return np.exp(-d2 * inv_two_h2)


def rbf_apply(points, centers, inv_two_h2, coeffs):
    """Displaced points x_i + sum_j coeffs_j * Phi[i, j]."""
    return points + rbf_weights(points, centers, inv_two_h2) @ coeffs


def rbf_coeff_grad(points, centers, inv_two_h2, weighted_cotangents):
    """Coefficient gradient Phi^T @ weighted_cotangents, shape (m, d)."""
    return rbf_weights(points, centers, inv_two_h2).T @ weighted_cotangents
