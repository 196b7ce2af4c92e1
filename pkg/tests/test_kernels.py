import numpy as np

from wass_dro import _kernels
from wass_dro._kernels import impl_py


def _random_inputs(seed, n=80, m=12, d=3):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, d))
    centers = rng.standard_normal((m, d))
    coeffs = 0.3 * rng.standard_normal((m, d))
    wc = rng.standard_normal((n, d)) / n
    return pts, centers, coeffs, wc


def test_active_backend_matches_reference():
    pts, centers, coeffs, wc = _random_inputs(0)
    inv = 1.0 / (2.0 * 0.7 ** 2)
    np.testing.assert_allclose(_kernels.rbf_weights(pts, centers, inv),
                               impl_py.rbf_weights(pts, centers, inv), rtol=1e-13)
    np.testing.assert_allclose(_kernels.rbf_apply(pts, centers, inv, coeffs),
                               impl_py.rbf_apply(pts, centers, inv, coeffs), rtol=1e-13)
    np.testing.assert_allclose(_kernels.rbf_coeff_grad(pts, centers, inv, wc),
                               impl_py.rbf_coeff_grad(pts, centers, inv, wc), rtol=1e-13)


def test_apply_is_points_plus_feature_combination():
    pts, centers, coeffs, _ = _random_inputs(1)
    inv = 1.0 / (2.0 * 0.5 ** 2)
    phi = _kernels.rbf_weights(pts, centers, inv)
    np.testing.assert_allclose(_kernels.rbf_apply(pts, centers, inv, coeffs),
                               pts + phi @ coeffs, rtol=1e-12, atol=1e-15)


def test_zero_coefficients_give_identity():
    pts, centers, _, _ = _random_inputs(2)
    inv = 1.0
    out = _kernels.rbf_apply(pts, centers, inv, np.zeros_like(centers))
    np.testing.assert_array_equal(out, pts)


def test_backend_name_reported():
    assert _kernels.backend_name() in ("cython", "python")
