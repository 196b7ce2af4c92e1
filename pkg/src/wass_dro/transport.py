"""Parameterized transport maps and Wasserstein quantities.

A candidate worst-case distribution Q is represented as the pushforward of
a fixed base cloud (the particle stand-in for the reference P) through a
parameterized map T. Three families are provided:

* ``Identity``            -- no free parameters;
* ``Affine``              -- T(x) = A x + b, theta = (A, b);
* ``ResidualFeatures``    -- T(x) = x + sum_j coeffs_j exp(-||x - c_j||^2 / (2 h^2)),
                             theta = coeffs, centers/bandwidth structural.

Since every iterate is a pushforward of the same base, the natural
distance between iterates is the base-anchored map distance

    dist(T1, T2)^2 = sum_i w_i ||T1(x_i) - T2(x_i)||^2,

which upper-bounds the true Wasserstein-2 distance between the
pushforwards (it is the cost of one explicit coupling). An exact
small-instance W2 oracle (1-D by sorting, otherwise Hungarian assignment,
capped at N = 64) is provided for diagnostics.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .errors import ConfigurationError, OracleLimitError, ShapeError, ValidationError
from .measures import ParticleCloud


def _as_points(x, dim: int):
    """Coerce (d,) or (N, d) input to (N, d); return (array, was_single)."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ShapeError(f"expected points of dimension {dim}, got shape {np.asarray(x).shape}")
    return np.ascontiguousarray(arr), single


class TransportMap:
    """Common interface of all map families. Instances are immutable values."""

    dim: int

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    @property
    def params(self) -> np.ndarray:
        raise NotImplementedError

    def with_params(self, theta) -> "TransportMap":
        raise NotImplementedError

    def identity_like(self) -> "TransportMap":
        """Same-family map that acts as the identity."""
        raise NotImplementedError

    def apply(self, x):
        """Evaluate the map on a point (d,) or a batch (N, d)."""
        raise NotImplementedError

    def __call__(self, x):
        return self.apply(x)

    def param_grad(self, points, weighted_cotangents) -> np.ndarray:
        """Gradient in theta of sum_i <wc_i, T_theta(x_i)> (wc = weight * cotangent)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class Identity(TransportMap):
    def __init__(self, dim: int):
        if dim < 1:
            raise ConfigurationError("dim must be >= 1")
        self.dim = int(dim)

    @property
    def params(self) -> np.ndarray:
        return np.zeros(0)

    def with_params(self, theta) -> "Identity":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (0,):
            raise ShapeError("Identity has no free parameters")
        return self

    def identity_like(self) -> "Identity":
        return self

    def apply(self, x):
        arr, single = _as_points(x, self.dim)
        out = arr.copy()
        return out[0] if single else out

    def param_grad(self, points, weighted_cotangents) -> np.ndarray:
        return np.zeros(0)

    def to_dict(self) -> dict:
        return {"family": "identity", "dim": self.dim}


class Affine(TransportMap):
    """T(x) = A x + b with theta = [A.ravel(), b]."""

    def __init__(self, A, b):
        A = np.array(A, dtype=np.float64, copy=True)
        b = np.array(b, dtype=np.float64, copy=True)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigurationError(f"A must be square, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise ConfigurationError(f"b shape {b.shape} does not match A {A.shape}")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValidationError("affine parameters must be finite")
        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self.b = b
        self.dim = A.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Affine":
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.A.ravel(), self.b])

    def with_params(self, theta) -> "Affine":
        theta = np.asarray(theta, dtype=np.float64)
        d = self.dim
        if theta.shape != (d * d + d,):
            raise ShapeError(f"expected {d * d + d} parameters, got {theta.shape}")
        return Affine(theta[: d * d].reshape(d, d), theta[d * d:])

    def identity_like(self) -> "Affine":
        return Affine.identity(self.dim)

    def apply(self, x):
        arr, single = _as_points(x, self.dim)
        out = arr @ self.A.T + self.b
        return out[0] if single else out

    def param_grad(self, points, weighted_cotangents) -> np.ndarray:
        # d<c, Ax+b>/dA[j,k] = c_j x_k, so the A block is wc^T @ points.
        gA = weighted_cotangents.T @ points
        gb = weighted_cotangents.sum(axis=0)
        return np.concatenate([gA.ravel(), gb])

    def to_dict(self) -> dict:
        return {"family": "affine", "dim": self.dim, "params": self.params.tolist()}


class ResidualFeatures(TransportMap):
    """Identity plus a Gaussian-feature residual.

    T(x) = x + sum_j coeffs_j * exp(-||x - centers_j||^2 / (2 bandwidth^2)).

    Centers and bandwidth are structural; only the coefficients are free
    parameters, which keeps the theta-Jacobian exact and cheap.
    """

    def __init__(self, centers, bandwidth: float, coeffs=None):
        centers = np.array(centers, dtype=np.float64, copy=True, order="C")
        if centers.ndim != 2:
            raise ConfigurationError(f"centers must be m x d, got shape {centers.shape}")
        if not np.isfinite(centers).all():
            raise ValidationError("centers must be finite")
        bandwidth = float(bandwidth)
        if not bandwidth > 0:
            raise ConfigurationError(f"bandwidth must be > 0, got {bandwidth}")
        m, d = centers.shape
        if coeffs is None:
            coeffs = np.zeros((m, d))
        coeffs = np.array(coeffs, dtype=np.float64, copy=True, order="C")
        if coeffs.shape != (m, d):
            raise ConfigurationError(f"coeffs shape {coeffs.shape} does not match centers {centers.shape}")
        if not np.isfinite(coeffs).all():
            raise ValidationError("coeffs must be finite")
        centers.setflags(write=False)
        coeffs.setflags(write=False)
        self.centers = centers
        self.bandwidth = bandwidth
        self.coeffs = coeffs
        self.dim = d
        self._inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth)

    @property
    def params(self) -> np.ndarray:
        return self.coeffs.ravel().copy()

    def with_params(self, theta) -> "ResidualFeatures":
        theta = np.asarray(theta, dtype=np.float64)
        m, d = self.coeffs.shape
        if theta.shape != (m * d,):
            raise ShapeError(f"expected {m * d} parameters, got {theta.shape}")
        return ResidualFeatures(self.centers, self.bandwidth, theta.reshape(m, d))

    def identity_like(self) -> "ResidualFeatures":
        return ResidualFeatures(self.centers, self.bandwidth)

    def feature_weights(self, points) -> np.ndarray:
        pts = np.ascontiguousarray(points, dtype=np.float64)
        return _kernels.rbf_weights(pts, self.centers, self._inv_two_h2)

    def apply(self, x):
        arr, single = _as_points(x, self.dim)
        out = _kernels.rbf_apply(arr, self.centers, self._inv_two_h2, self.coeffs)
        return out[0] if single else out

    def param_grad(self, points, weighted_cotangents) -> np.ndarray:
        pts = np.ascontiguousarray(points, dtype=np.float64)
        wc = np.ascontiguousarray(weighted_cotangents, dtype=np.float64)
        return _kernels.rbf_coeff_grad(pts, self.centers, self._inv_two_h2, wc).ravel()

    def to_dict(self) -> dict:
        return {
            "family": "residual_features",
            "dim": self.dim,
            "centers": self.centers.tolist(),
            "bandwidth": self.bandwidth,
            "params": self.params.tolist(),
        }


def map_from_dict(data: dict) -> TransportMap:
    """Inverse of ``TransportMap.to_dict``; validates invariants."""
    try:
        family = data["family"]
    except (TypeError, KeyError):
        raise ConfigurationError("map serialization must carry a 'family' field") from None
    if family == "identity":
        return Identity(int(data["dim"]))
    if family == "affine":
        d = int(data["dim"])
        template = Affine.identity(d)
        params = data.get("params")
        return template if params is None else template.with_params(np.asarray(params, dtype=np.float64))
    if family == "residual_features":
        template = ResidualFeatures(data["centers"], data["bandwidth"])
        params = data.get("params")
        return template if params is None else template.with_params(np.asarray(params, dtype=np.float64))
    raise ConfigurationError(f"unknown map family {family!r}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def pushforward(map_: TransportMap, cloud: ParticleCloud) -> ParticleCloud:
    """Image cloud T#base: same weights and labels, transported coordinates."""
    if map_.dim != cloud.dim:
        raise ShapeError(f"map dimension {map_.dim} != cloud dimension {cloud.dim}")
    return cloud.with_points(map_.apply(cloud.points))


def map_l2_distance(t1: TransportMap, t2: TransportMap, base: ParticleCloud) -> float:
    """Base-anchored map distance sqrt(sum_i w_i ||T1(x_i) - T2(x_i)||^2).

    When both measures are pushforwards of `base` through these maps, this
    is the particle estimate of the base-anchored Wasserstein distance and
    an upper bound on W2 between the pushforwards.
    """
    if t1.dim != base.dim or t2.dim != base.dim:
        raise ShapeError("map/base dimension mismatch")
    diff = t1.apply(base.points) - t2.apply(base.points)
    sq = np.einsum("ij,ij->i", diff, diff)
    return float(np.sqrt(np.dot(base.weights, sq)))


def w2_monge(map_: TransportMap, base: ParticleCloud) -> float:
    """Monge-form squared displacement sum_i w_i ||x_i - T(x_i)||^2.

    This is the squared-W2 surrogate used as the transport discrepancy:
    it equals W2^2(T#P, P) when T is the optimal map and upper-bounds it
    otherwise.
    """
    if map_.dim != base.dim:
        raise ShapeError("map/base dimension mismatch")
    diff = base.points - map_.apply(base.points)
    sq = np.einsum("ij,ij->i", diff, diff)
    return float(np.dot(base.weights, sq))


def param_gradient(map_: TransportMap, base: ParticleCloud, cotangents) -> np.ndarray:
    """Exact gradient in theta of sum_i w_i <cotangent_i, T_theta(x_i)>.

    Row i of `cotangents` is d(objective)/dT(x_i); this is the reverse-mode
    accumulation through the map parameters.
    """
    cot = np.asarray(cotangents, dtype=np.float64)
    if cot.shape != base.points.shape:
        raise ShapeError(f"cotangents shape {cot.shape} does not match base {base.points.shape}")
    return map_.param_grad(base.points, base.weights[:, None] * cot)


_ORACLE_CAP = 64


def _w2_sorted_1d(xa, wa, xb, wb) -> float:
    """Exact 1-D OT cost by quantile (northwest-corner) coupling."""
    ia = np.argsort(xa, kind="stable")
    ib = np.argsort(xb, kind="stable")
    xa, wa = xa[ia], wa[ia]
    xb, wb = xb[ib], wb[ib]
    cost = 0.0
    i = j = 0
    ra, rb = wa[0], wb[0]
    while True:
        m = min(ra, rb)
        d = xa[i] - xb[j]
        cost += m * d * d
        ra -= m
        rb -= m
        if ra <= 1e-18:
            i += 1
            if i >= xa.shape[0]:
                break
            ra = wa[i]
        if rb <= 1e-18:
            j += 1
            if j >= xb.shape[0]:
                break
            rb = wb[j]
    return float(cost)


def exact_w2_empirical(a: ParticleCloud, b: ParticleCloud) -> float:
    """Exact squared Wasserstein-2 distance between two small clouds.

    d = 1: any N and weights, solved by sorting. d >= 2: equal N <= 64 with
    uniform weights, solved as an optimal assignment (Hungarian algorithm);
    larger instances raise OracleLimitError. Diagnostic use only.
    """
    if a.dim != b.dim:
        raise ShapeError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.dim == 1:
        return _w2_sorted_1d(a.points[:, 0], a.weights, b.points[:, 0], b.weights)

    if a.n > _ORACLE_CAP or b.n > _ORACLE_CAP:
        raise OracleLimitError(
            f"oracle limit exceeded: N <= {_ORACLE_CAP} required in d >= 2, got {a.n} and {b.n}")
    if a.n != b.n:
        raise ValidationError("unsupported: unequal N requires d = 1")
    n = a.n
    if (np.abs(a.weights - 1.0 / n).max() > 1e-12) or (np.abs(b.weights - 1.0 / n).max() > 1e-12):
        raise ValidationError("unsupported: the assignment path requires uniform weights")

    diff = a.points[:, None, :] - b.points[None, :, :]
    cost = np.einsum("nmd,nmd->nm", diff, diff)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / n)
