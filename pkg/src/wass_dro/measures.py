"""Particle-cloud approximations of reference distributions.

A `ParticleCloud` is a set of N weighted points in R^d standing in for a
probability measure with finite second moment. Reference measures
(Gaussian with diagonal covariance, Gaussian mixture, uniform box,
empirical CSV) are sampled into clouds through a pinned counter-based
generator so that every downstream computation is a deterministic
function of (reference, n, seed).

All objects here are immutable after construction and safe to share
across threads; sampling is a pure function of its arguments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigurationError, ParseError, ValidationError

# Counter-based generator; the name is recorded in output metadata because
# reproducibility claims are tied to this specific bit stream.
GENERATOR_NAME = "numpy-Philox4x64"

_WEIGHT_TOL = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator keyed by ``seed`` (taken mod 2**64)."""
    return np.random.Generator(np.random.Philox(key=np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)))


class ParticleCloud:
    """Immutable weighted particle set.

    Parameters
    ----------
    points : (N, d) array
        Particle coordinates. Must be finite.
    weights : (N,) array, optional
        Nonnegative, summing to 1 within 1e-12. Uniform when omitted.
    labels : (N,) int array, optional
        Classification labels in {-1, +1}.
    seed : int
        Seed recorded at creation (0 for clouds not produced by `sample`).
    """

    __slots__ = ("points", "weights", "labels", "seed")

    def __init__(self, points, weights=None, labels=None, seed: int = 0):
        pts = np.array(points, dtype=np.float64, order="C", copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValidationError(f"points must be an N x d matrix, got ndim={pts.ndim}")
        n, d = pts.shape
        if n < 1 or d < 1:
            raise ValidationError(f"need N >= 1 and d >= 1, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValidationError("points contain non-finite values")

        if weights is None:
            w = np.full(n, 1.0 / n)
            w /= w.sum()
        else:
            w = np.array(weights, dtype=np.float64, copy=True)
            if w.shape != (n,):
                raise ValidationError(f"weights shape {w.shape} does not match N={n}")
            if not np.isfinite(w).all() or (w < 0).any():
                raise ValidationError("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > _WEIGHT_TOL:
                raise ValidationError(f"weights sum to {w.sum()!r}, expected 1 within {_WEIGHT_TOL}")

        lab = None
        if labels is not None:
            lab = np.array(labels, dtype=np.int64, copy=True)
            if lab.shape != (n,):
                raise ValidationError(f"labels shape {lab.shape} does not match N={n}")
            if not np.isin(lab, (-1, 1)).all():
                raise ValidationError("labels must be in {-1, +1}")
            lab.setflags(write=False)

        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "seed", int(seed))

    def __setattr__(self, name, value):
        raise AttributeError("ParticleCloud is immutable")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def with_points(self, new_points) -> "ParticleCloud":
        """Same weights/labels/seed on new coordinates (pushforward carrier)."""
        return ParticleCloud(new_points, self.weights, self.labels, self.seed)

    def __repr__(self):
        lab = "" if self.labels is None else ", labeled"
        return f"ParticleCloud(n={self.n}, d={self.dim}{lab}, seed={self.seed})"


# ---------------------------------------------------------------------------
# Reference measures
# ---------------------------------------------------------------------------

def _as_vector(x, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if v.ndim != 1:
        raise ConfigurationError(f"{name} must be a vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ConfigurationError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class Gaussian:
    """N(mean, diag(cov_diag)) with strictly positive diagonal covariance."""

    mean: np.ndarray
    cov_diag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_vector(self.mean, "mean"))
        object.__setattr__(self, "cov_diag", _as_vector(self.cov_diag, "cov_diag"))
        if self.cov_diag.shape != self.mean.shape:
            raise ConfigurationError("mean and cov_diag must have the same length")
        if (self.cov_diag <= 0).any():
            raise ConfigurationError("cov_diag entries must be > 0")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class GaussianMixture:
    """Finite mixture of diagonal Gaussians; weights sum to 1."""

    weights: np.ndarray
    means: np.ndarray
    cov_diags: np.ndarray

    def __post_init__(self):
        w = _as_vector(self.weights, "mixture weights")
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        covs = np.atleast_2d(np.asarray(self.cov_diags, dtype=np.float64))
        if means.shape != covs.shape or means.shape[0] != w.shape[0]:
            raise ConfigurationError(
                f"inconsistent mixture shapes: weights {w.shape}, means {means.shape}, covs {covs.shape}")
        if (w < 0).any() or abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ConfigurationError("mixture weights must be nonnegative and sum to 1")
        if (covs <= 0).any():
            raise ConfigurationError("cov_diag entries must be > 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "cov_diags", covs)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class UniformBox:
    """Uniform distribution on the box [lo, hi], lo < hi componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_vector(self.lo, "lo"))
        object.__setattr__(self, "hi", _as_vector(self.hi, "hi"))
        if self.lo.shape != self.hi.shape:
            raise ConfigurationError("lo and hi must have the same length")
        if not (self.lo < self.hi).all():
            raise ConfigurationError("need lo < hi componentwise")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]


@dataclass(frozen=True)
class Empirical:
    """Empirical measure backed by a CSV file (see `load_csv`)."""

    path: str


ReferenceMeasure = Union[Gaussian, GaussianMixture, UniformBox, Empirical]


def sample(ref: ReferenceMeasure, n: int, seed: int) -> ParticleCloud:
    """Draw n particles from a reference measure; uniform weights 1/n.

    Deterministic for fixed (ref, n, seed): the Philox stream is consumed
    in a documented order (normals first, then mixture component indices,
    skipped entirely for single-component mixtures so a one-component
    mixture reproduces the plain Gaussian stream).
    """
    if n < 1:
        raise ConfigurationError(f"need n >= 1, got {n}")
    rng = make_rng(seed)

    if isinstance(ref, Gaussian):
        z = rng.standard_normal((n, ref.dim))
        pts = ref.mean + np.sqrt(ref.cov_diag) * z
        return ParticleCloud(pts, seed=seed)

    if isinstance(ref, GaussianMixture):
        k = ref.weights.shape[0]
        z = rng.standard_normal((n, ref.dim))
        if k == 1:
            idx = np.zeros(n, dtype=np.int64)
        else:
            idx = rng.choice(k, size=n, p=ref.weights)
        pts = ref.means[idx] + np.sqrt(ref.cov_diags[idx]) * z
        return ParticleCloud(pts, seed=seed)

    if isinstance(ref, UniformBox):
        u = rng.random((n, ref.dim))
        pts = ref.lo + (ref.hi - ref.lo) * u
        return ParticleCloud(pts, seed=seed)

    if isinstance(ref, Empirical):
        base = load_csv(ref.path)
        idx = rng.integers(0, base.n, size=n)
        lab = None if base.labels is None else base.labels[idx]
        return ParticleCloud(base.points[idx], labels=lab, seed=seed)

    raise ConfigurationError(f"unknown reference measure {type(ref).__name__}")


def second_moment(cloud: ParticleCloud) -> float:
    """Weighted second moment sum_i w_i ||x_i||^2."""
    sq = np.einsum("ij,ij->i", cloud.points, cloud.points)
    return float(np.dot(cloud.weights, sq))


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------
# Schema: header `x0,...,x{d-1}[,weight][,label]`; floats are written with
# 17 significant digits so load(save(c)) reproduces coordinates exactly.
# The weight column is written only for non-uniform clouds.

def save_csv(cloud: ParticleCloud, path) -> None:
    n, d = cloud.n, cloud.dim
    uniform = bool(np.all(np.abs(cloud.weights - 1.0 / n) <= 1e-15))
    header = [f"x{j}" for j in range(d)]
    if not uniform:
        header.append("weight")
    if cloud.labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            row = [f"{v:.17g}" for v in cloud.points[i]]
            if not uniform:
                row.append(f"{cloud.weights[i]:.17g}")
            if cloud.labels is not None:
                row.append(str(int(cloud.labels[i])))
            writer.writerow(row)


def load_csv(path) -> ParticleCloud:
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: no data rows")

    header = [c.strip() for c in rows[0]]
    cols = list(header)
    has_label = bool(cols) and cols[-1] == "label"
    if has_label:
        cols = cols[:-1]
    has_weight = bool(cols) and cols[-1] == "weight"
    if has_weight:
        cols = cols[:-1]
    d = len(cols)
    if d < 1 or cols != [f"x{j}" for j in range(d)]:
        raise ParseError(f"{path}: line 1: expected header x0,...,x{{d-1}}[,weight][,label], got {header}")
    if len(rows) == 1:
        raise ParseError(f"{path}: no data rows")

    width = d + int(has_weight) + int(has_label)
    pts = np.empty((len(rows) - 1, d))
    wts = np.empty(len(rows) - 1) if has_weight else None
    labs = np.empty(len(rows) - 1, dtype=np.int64) if has_label else None
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ParseError(f"{path}: line {i}: expected {width} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row[:d]]
        except ValueError as exc:
            raise ParseError(f"{path}: line {i}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"{path}: line {i}: non-finite coordinate")
        pts[i - 2] = vals
        k = d
        if has_weight:
            try:
                wts[i - 2] = float(row[k])
            except ValueError as exc:
                raise ParseError(f"{path}: line {i}: {exc}") from None
            k += 1
        if has_label:
            try:
                labs[i - 2] = int(row[k])
            except ValueError as exc:
                raise ParseError(f"{path}: line {i}: {exc}") from None

    return ParticleCloud(pts, weights=wts, labels=labs, seed=0)
