import itertools

import numpy as np
import pytest

import wass_dro as wd
from wass_dro.errors import ConfigurationError, OracleLimitError, ShapeError, ValidationError

from conftest import fd_gradient, rel_err


def _random_cloud(n, d, seed, uniform=True):
    rng = np.random.default_rng(seed)
    if uniform:
        return wd.ParticleCloud(rng.standard_normal((n, d)))
    w = rng.random(n)
    return wd.ParticleCloud(rng.standard_normal((n, d)), weights=w / w.sum())


# ---------------------------------------------------------------------------
# map evaluation
# ---------------------------------------------------------------------------

def test_identity_and_affine_apply():
    cloud = _random_cloud(10, 2, 0)
    ident = wd.Identity(2)
    assert np.array_equal(wd.pushforward(ident, cloud).points, cloud.points)

    doubling = wd.Affine(2.0 * np.eye(2), np.zeros(2))
    assert np.allclose(doubling.apply(np.array([1.0, -1.0])), [2.0, -2.0])

    like_identity = wd.Affine.identity(2)
    assert np.array_equal(like_identity.apply(cloud.points), cloud.points)


def test_residual_features_zero_coeffs_is_identity():
    rng = np.random.default_rng(1)
    rbf = wd.ResidualFeatures(rng.standard_normal((4, 3)), bandwidth=0.7)
    pts = rng.standard_normal((20, 3))
    assert np.array_equal(rbf.apply(pts), pts)


def test_pushforward_preserves_weights_and_labels():
    cloud = wd.ParticleCloud([[0.0, 1.0], [2.0, 3.0]], weights=[0.25, 0.75], labels=[1, -1])
    moved = wd.pushforward(wd.Affine(np.eye(2), np.array([1.0, 0.0])), cloud)
    assert np.array_equal(moved.weights, cloud.weights)
    assert np.array_equal(moved.labels, cloud.labels)
    assert np.allclose(moved.points, cloud.points + [1.0, 0.0])


def test_apply_shape_errors():
    with pytest.raises(ShapeError):
        wd.Affine.identity(2).apply(np.zeros(3))
    with pytest.raises(ShapeError):
        wd.pushforward(wd.Identity(3), _random_cloud(5, 2, 2))


# ---------------------------------------------------------------------------
# map distance
# ---------------------------------------------------------------------------

def test_map_l2_distance_cases():
    cloud = _random_cloud(50, 2, 3, uniform=False)
    t = wd.Affine(np.eye(2) * 1.3, np.array([0.2, -0.1]))
    assert wd.map_l2_distance(t, t, cloud) == 0.0

    shift = wd.Affine(np.eye(2), np.array([3.0, 4.0]))
    assert wd.map_l2_distance(wd.Identity(2), shift, cloud) == pytest.approx(5.0, rel=1e-12)

    big = wd.sample(wd.Gaussian([0.0], [1.0]), 10_000, 9)
    dist = wd.map_l2_distance(wd.Affine(2 * np.eye(1), np.zeros(1)), wd.Identity(1), big)
    assert abs(dist - 1.0) < 0.05


def test_map_l2_distance_is_a_metric_on_random_triples():
    cloud = _random_cloud(30, 2, 4)
    rng = np.random.default_rng(5)
    for _ in range(20):
        maps = [wd.Affine(np.eye(2) + 0.5 * rng.standard_normal((2, 2)),
                          rng.standard_normal(2)) for _ in range(3)]
        d01 = wd.map_l2_distance(maps[0], maps[1], cloud)
        d10 = wd.map_l2_distance(maps[1], maps[0], cloud)
        d02 = wd.map_l2_distance(maps[0], maps[2], cloud)
        d12 = wd.map_l2_distance(maps[1], maps[2], cloud)
        assert d01 == pytest.approx(d10, abs=1e-15)
        assert d02 <= d01 + d12 + 1e-10


def test_w2_monge_cases():
    cloud = _random_cloud(40, 3, 6, uniform=False)
    assert wd.w2_monge(wd.Identity(3), cloud) == 0.0
    shift = wd.Affine(np.eye(3), np.array([1.0, 2.0, 2.0]))
    assert wd.w2_monge(shift, cloud) == pytest.approx(9.0, rel=1e-12)
    two = wd.ParticleCloud([[-1.0], [1.0]])
    collapse = wd.Affine(np.zeros((1, 1)), np.zeros(1))
    assert wd.w2_monge(collapse, two) == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------------------------
# exact small-instance OT oracle
# ---------------------------------------------------------------------------

def test_exact_w2_identical_clouds():
    cloud = _random_cloud(20, 2, 7)
    assert wd.exact_w2_empirical(cloud, cloud) == pytest.approx(0.0, abs=1e-15)


def test_exact_w2_1d_sorting_example():
    a = wd.ParticleCloud([[0.0], [2.0]])
    b = wd.ParticleCloud([[1.0], [3.0]])
    # Exhaustive: sorted matching costs (1 + 1)/2 = 1, crossed (9 + 1)/2 = 5.
    assert wd.exact_w2_empirical(a, b) == pytest.approx(1.0, abs=1e-15)


def test_exact_w2_matches_factorial_brute_force_in_2d():
    rng = np.random.default_rng(8)
    for n in (2, 3, 4, 5, 6):
        a = wd.ParticleCloud(rng.standard_normal((n, 2)))
        b = wd.ParticleCloud(rng.standard_normal((n, 2)))
        cost = ((a.points[:, None, :] - b.points[None, :, :]) ** 2).sum(axis=2)
        brute = min(cost[np.arange(n), perm].sum()
                    for perm in itertools.permutations(range(n))) / n
        assert wd.exact_w2_empirical(a, b) == pytest.approx(brute, abs=1e-12)


def test_exact_w2_upper_bounds():
    rng = np.random.default_rng(9)
    cloud = _random_cloud(16, 2, 10)
    # Any explicit coupling (here: random permutations) upper-bounds the oracle.
    other = _random_cloud(16, 2, 11)
    exact = wd.exact_w2_empirical(cloud, other)
    for _ in range(10):
        perm = rng.permutation(16)
        coupling_cost = float(np.mean(((cloud.points - other.points[perm]) ** 2).sum(axis=1)))
        assert exact <= coupling_cost + 1e-12
    # Monge-form displacement of any map upper-bounds W2^2 of its pushforward.
    for _ in range(5):
        t = wd.Affine(np.eye(2) + 0.4 * rng.standard_normal((2, 2)), rng.standard_normal(2))
        assert wd.exact_w2_empirical(wd.pushforward(t, cloud), cloud) <= wd.w2_monge(t, cloud) + 1e-9


def test_exact_w2_1d_nonuniform_weights():
    a = wd.ParticleCloud([[0.0], [1.0]], weights=[0.75, 0.25])
    b = wd.ParticleCloud([[0.0], [1.0]], weights=[0.25, 0.75])
    # quantile coupling: move 0.5 mass across distance 1.
    assert wd.exact_w2_empirical(a, b) == pytest.approx(0.5, abs=1e-15)


def test_exact_w2_1d_unequal_sizes():
    a = wd.ParticleCloud([[0.0]])
    b = wd.ParticleCloud([[1.0], [3.0]])
    # split the unit atom: 0.5 * 1 + 0.5 * 9
    assert wd.exact_w2_empirical(a, b) == pytest.approx(5.0, abs=1e-15)


def test_exact_w2_limits():
    big_a = _random_cloud(70, 2, 12)
    big_b = _random_cloud(70, 2, 13)
    with pytest.raises(OracleLimitError, match="oracle limit exceeded"):
        wd.exact_w2_empirical(big_a, big_b)
    with pytest.raises(ValidationError, match="unsupported"):
        wd.exact_w2_empirical(_random_cloud(4, 2, 14), _random_cloud(5, 2, 15))
    with pytest.raises(ValidationError, match="uniform"):
        wd.exact_w2_empirical(_random_cloud(4, 2, 16, uniform=False),
                              _random_cloud(4, 2, 17))


# ---------------------------------------------------------------------------
# parameter gradients
# ---------------------------------------------------------------------------

def test_param_gradient_zero_cotangents():
    cloud = _random_cloud(10, 2, 18)
    t = wd.Affine.identity(2)
    assert np.array_equal(wd.param_gradient(t, cloud, np.zeros((10, 2))), np.zeros(6))


def test_param_gradient_affine_single_point():
    x = np.array([1.5, -2.0])
    c = np.array([0.3, 0.7])
    cloud = wd.ParticleCloud(x[None, :])
    g = wd.param_gradient(wd.Affine.identity(2), cloud, c[None, :])
    gA = g[:4].reshape(2, 2)
    gb = g[4:]
    assert np.allclose(gA, np.outer(c, x), atol=1e-15)
    assert np.allclose(gb, c, atol=1e-15)


def test_param_gradient_matches_finite_differences():
    rng = np.random.default_rng(19)
    cloud = _random_cloud(15, 2, 20, uniform=False)
    cot = rng.standard_normal((15, 2))
    maps = [
        wd.Affine(np.eye(2) + 0.2 * rng.standard_normal((2, 2)), rng.standard_normal(2)),
        wd.ResidualFeatures(rng.standard_normal((5, 2)), 0.9,
                            0.2 * rng.standard_normal((5, 2))),
        wd.Identity(2),
    ]
    for template in maps:
        theta0 = template.params

        def scalar(theta):
            moved = template.with_params(theta).apply(cloud.points)
            return float(np.sum(cloud.weights[:, None] * cot * moved))

        analytic = wd.param_gradient(template, cloud, cot)
        if theta0.shape[0] == 0:
            assert analytic.shape == (0,)
            continue
        numeric = fd_gradient(scalar, theta0, h=1e-6)
        assert rel_err(analytic, numeric) < 1e-5


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_map_serialization_round_trip():
    rng = np.random.default_rng(21)
    maps = [
        wd.Identity(3),
        wd.Affine(np.eye(2) + 0.1 * rng.standard_normal((2, 2)), rng.standard_normal(2)),
        wd.ResidualFeatures(rng.standard_normal((4, 2)), 1.2, rng.standard_normal((4, 2))),
    ]
    cloud = _random_cloud(8, 2, 22)
    for m in maps:
        back = wd.map_from_dict(m.to_dict())
        assert type(back) is type(m)
        if m.dim == cloud.dim:
            assert np.allclose(back.apply(cloud.points), m.apply(cloud.points))


def test_map_deserialization_validates():
    with pytest.raises(ConfigurationError):
        wd.map_from_dict({"family": "warp", "dim": 2})
    with pytest.raises(ConfigurationError):
        wd.ResidualFeatures(np.zeros((2, 2)), bandwidth=0.0)
    with pytest.raises(ShapeError):
        wd.Affine.identity(2).with_params(np.zeros(5))
