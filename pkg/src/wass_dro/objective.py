"""Loss families, decision models, discrepancies, and the saddle objective.

For a decision parameter phi and one transport map per ambiguity
component, the objective assembled here is

    H(phi, Q) = sum_c [ sum_i w_i l_c(f_phi, T_c(x_i)) - lambda * D_c(T_c # P_c, P_c) ],

together with its phi-subgradient (maps held fixed) and the per-particle
first-variation field used by the inner solver's optimality certificate.

Each discrepancy carries a modulus ``mu`` such that lambda * D is
(lambda * mu)-strongly convex along generalized geodesics centered at the
base: mu = 2 for the squared-displacement discrepancy (whose one-half is
1-strongly convex), and mu = 1 / max(cov) for the Gaussian relative
entropy (the modulus of its potential). Everywhere the analysis asks for
"regularization minus weak-convexity", the code uses

    kappa = lambda * mu - rho.

Problem specs violating lambda * mu > rho are rejected at construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, ShapeError, ValidationError
from .measures import ParticleCloud
from .transport import Affine, TransportMap, map_l2_distance, w2_monge

_EXP_CLAMP = 50.0


# ---------------------------------------------------------------------------
# Constraint sets for the decision parameter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Free:
    """Unconstrained parameter set."""


@dataclass(frozen=True)
class Box:
    """Per-coordinate box [lo, hi]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if lo.shape != hi.shape or not (lo <= hi).all():
            raise ConfigurationError("box constraint needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


@dataclass(frozen=True)
class Ball:
    """Euclidean ball of given radius centered at the origin."""

    radius: float

    def __post_init__(self):
        if not float(self.radius) > 0:
            raise ConfigurationError("ball radius must be > 0")
        object.__setattr__(self, "radius", float(self.radius))


Constraint = Union[Free, Box, Ball]


# ---------------------------------------------------------------------------
# Decision models
# ---------------------------------------------------------------------------

def _softplus(z):
    return np.logaddexp(0.0, z)


class LinearModel:
    """f_phi(x) = w . x + b with phi = [w, b]."""

    kind = "linear"

    def __init__(self, dim: int, phi0=None, constraint: Constraint = Free()):
        if dim < 1:
            raise ConfigurationError("dim must be >= 1")
        self.dim = int(dim)
        self.constraint = constraint
        if phi0 is None:
            phi0 = np.zeros(self.n_params)
        self.phi0 = np.asarray(phi0, dtype=np.float64).copy()
        if self.phi0.shape != (self.n_params,):
            raise ConfigurationError(f"phi0 must have {self.n_params} entries")

    @property
    def n_params(self) -> int:
        return self.dim + 1

    def value(self, phi, X) -> np.ndarray:
        w, b = phi[:-1], phi[-1]
        return X @ w + b

    def phi_vjp(self, phi, X, r) -> np.ndarray:
        """sum_i r_i * grad_phi f(x_i)."""
        return np.concatenate([X.T @ r, [r.sum()]])

    def xi_gradient(self, phi, X) -> np.ndarray:
        return np.broadcast_to(phi[:-1], X.shape).copy()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "phi0": self.phi0.tolist(),
                "constraint": constraint_to_dict(self.constraint)}


class MlpSoftplus:
    """Scalar MLP with softplus activations (C^1 with Lipschitz gradient).

    widths = [d, h_1, ..., h_k]; the output layer is linear to a scalar.
    Parameters are packed layer by layer as [W.ravel(), b].
    """

    kind = "mlp_softplus"

    def __init__(self, widths: Sequence[int], phi0=None, constraint: Constraint = Free()):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ConfigurationError(f"widths must list >= 2 positive sizes, got {widths}")
        self.widths = widths
        self.constraint = constraint
        self._shapes = []
        full = widths + [1]
        for fan_in, fan_out in zip(full[:-1], full[1:]):
            self._shapes.append((fan_out, fan_in))
        if phi0 is None:
            phi0 = np.zeros(self.n_params)
        self.phi0 = np.asarray(phi0, dtype=np.float64).copy()
        if self.phi0.shape != (self.n_params,):
            raise ConfigurationError(f"phi0 must have {self.n_params} entries")

    @property
    def dim(self) -> int:
        return self.widths[0]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self._shapes)

    def _unpack(self, phi):
        out = []
        k = 0
        for o, i in self._shapes:
            W = phi[k:k + o * i].reshape(o, i)
            k += o * i
            b = phi[k:k + o]
            k += o
            out.append((W, b))
        return out

    def _forward(self, phi, X):
        layers = self._unpack(phi)
        acts = [X]
        pre = []
        a = X
        for W, b in layers[:-1]:
            z = a @ W.T + b
            pre.append(z)
            a = _softplus(z)
            acts.append(a)
        W, b = layers[-1]
        f = (acts[-1] @ W.T + b)[:, 0]
        return f, acts, pre, layers

    def value(self, phi, X) -> np.ndarray:
        return self._forward(phi, X)[0]

    def phi_vjp(self, phi, X, r) -> np.ndarray:
        f, acts, pre, layers = self._forward(phi, X)
        grads = [None] * len(layers)
        delta = np.asarray(r, dtype=np.float64)[:, None]
        for l in range(len(layers) - 1, -1, -1):
            W, b = layers[l]
            grads[l] = (delta.T @ acts[l], delta.sum(axis=0))
            if l > 0:
                delta = (delta @ W) * expit(pre[l - 1])
        return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])

    def xi_gradient(self, phi, X) -> np.ndarray:
        f, acts, pre, layers = self._forward(phi, X)
        G = np.ones((X.shape[0], 1))
        for l in range(len(layers) - 1, -1, -1):
            W, _ = layers[l]
            G = G @ W
            if l > 0:
                G = G * expit(pre[l - 1])
        return G

    def to_dict(self) -> dict:
        return {"kind": self.kind, "widths": self.widths, "phi0": self.phi0.tolist(),
                "constraint": constraint_to_dict(self.constraint)}


DecisionModel = Union[LinearModel, MlpSoftplus]


def constraint_to_dict(c: Constraint) -> dict:
    if isinstance(c, Free):
        return {"kind": "free"}
    if isinstance(c, Box):
        return {"kind": "box", "lo": c.lo.tolist(), "hi": c.hi.tolist()}
    if isinstance(c, Ball):
        return {"kind": "ball", "radius": c.radius}
    raise ConfigurationError(f"unknown constraint {type(c).__name__}")


def constraint_from_dict(data: dict) -> Constraint:
    kind = data.get("kind", "free")
    if kind == "free":
        return Free()
    if kind == "box":
        return Box(np.asarray(data["lo"], dtype=np.float64), np.asarray(data["hi"], dtype=np.float64))
    if kind == "ball":
        return Ball(float(data["radius"]))
    raise ConfigurationError(f"unknown constraint kind {kind!r}")


def model_from_dict(data: dict) -> DecisionModel:
    kind = data.get("kind")
    constraint = constraint_from_dict(data.get("constraint", {"kind": "free"}))
    phi0 = data.get("phi0")
    if kind == "linear":
        return LinearModel(int(data["dim"]), phi0=phi0, constraint=constraint)
    if kind == "mlp_softplus":
        return MlpSoftplus(data["widths"], phi0=phi0, constraint=constraint)
    raise ConfigurationError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# Loss kinds
# ---------------------------------------------------------------------------
# The f-mediated kinds evaluate g(s * f_phi(z)); s is -y when the component
# carries labels (labels are frozen under transport), otherwise the
# configured detector sign. sign=None declares that labels are required.

def _check_sign(sign):
    if sign is not None and sign not in (-1, 1):
        raise ConfigurationError(f"sign must be -1, +1 or None, got {sign!r}")


@dataclass(frozen=True)
class Exponential:
    """l = exp(s * f(z)), exponent clamped to +-50 (clamping is flagged)."""

    sign: Optional[int] = 1

    def __post_init__(self):
        _check_sign(self.sign)


@dataclass(frozen=True)
class Logistic:
    """l = log(1 + exp(s * f(z)))."""

    sign: Optional[int] = 1

    def __post_init__(self):
        _check_sign(self.sign)


@dataclass(frozen=True)
class SquaredHinge:
    """l = max(s * f(z) + 1, 0)^2; C^1, with a kink only in l''."""

    sign: Optional[int] = 1

    def __post_init__(self):
        _check_sign(self.sign)


@dataclass(frozen=True)
class QuadraticTest:
    """l = (alpha / 2) ||z||^2, independent of phi (testbed loss)."""

    alpha: float


@dataclass(frozen=True)
class QuadraticPhi:
    """l = (beta / 2) ||phi||^2, independent of z (testbed loss).

    Makes the max function an exactly computable quadratic in phi: the
    inner maximizer is the reference itself, so V(phi) = beta/2 ||phi||^2.
    """

    beta: float


LossKind = Union[Exponential, Logistic, SquaredHinge, QuadraticTest, QuadraticPhi]

_F_MEDIATED = (Exponential, Logistic, SquaredHinge)


def _signs_for(loss, labels, n: int):
    if isinstance(loss, _F_MEDIATED):
        if labels is not None:
            return -labels.astype(np.float64)
        if loss.sign is None:
            raise ConfigurationError(f"{type(loss).__name__}(sign=None) requires labeled data")
        return float(loss.sign)
    return None


def loss_values_batch(loss, model, phi, Z, labels=None) -> Tuple[np.ndarray, bool]:
    """Vectorized loss values at transported points; second item flags
    whether the exponential clamp was hit anywhere."""
    n = Z.shape[0]
    if isinstance(loss, QuadraticTest):
        return 0.5 * loss.alpha * np.einsum("ij,ij->i", Z, Z), False
    if isinstance(loss, QuadraticPhi):
        return np.full(n, 0.5 * loss.beta * float(phi @ phi)), False
    s = _signs_for(loss, labels, n)
    u = s * model.value(phi, Z)
    if isinstance(loss, Exponential):
        clamped = bool((np.abs(u) > _EXP_CLAMP).any())
        return np.exp(np.clip(u, -_EXP_CLAMP, _EXP_CLAMP)), clamped
    if isinstance(loss, Logistic):
        return np.logaddexp(0.0, u), False
    if isinstance(loss, SquaredHinge):
        return np.square(np.maximum(u + 1.0, 0.0)), False
    raise ConfigurationError(f"unknown loss kind {type(loss).__name__}")


def _chain_factor(loss, model, phi, Z, labels):
    """dl/du at u = s * f(z), times s: the per-particle factor such that
    grad_phi l = factor * grad_phi f and grad_z l = factor * grad_z f."""
    s = _signs_for(loss, labels, Z.shape[0])
    u = s * model.value(phi, Z)
    if isinstance(loss, Exponential):
        inside = np.abs(u) < _EXP_CLAMP
        return np.exp(np.clip(u, -_EXP_CLAMP, _EXP_CLAMP)) * inside * s
    if isinstance(loss, Logistic):
        return expit(u) * s
    if isinstance(loss, SquaredHinge):
        return 2.0 * np.maximum(u + 1.0, 0.0) * s
    raise ConfigurationError(f"unknown loss kind {type(loss).__name__}")


def loss_grad_phi_batch(loss, model, phi, Z, weights, labels=None) -> np.ndarray:
    """sum_i weights_i * grad_phi l(f_phi, z_i)."""
    if isinstance(loss, QuadraticTest):
        return np.zeros_like(phi)
    if isinstance(loss, QuadraticPhi):
        return loss.beta * phi * float(np.sum(weights))
    factor = _chain_factor(loss, model, phi, Z, labels)
    return model.phi_vjp(phi, Z, weights * factor)


def loss_grad_xi_batch(loss, model, phi, Z, labels=None) -> np.ndarray:
    """Per-particle gradient grad_z l(f_phi, z_i), shape (N, d)."""
    if isinstance(loss, QuadraticTest):
        return loss.alpha * Z
    if isinstance(loss, QuadraticPhi):
        return np.zeros_like(Z)
    factor = _chain_factor(loss, model, phi, Z, labels)
    return factor[:, None] * model.xi_gradient(phi, Z)


def loss_value(loss, model, phi, xi, label=None) -> float:
    """Pointwise loss l(f_phi, xi)."""
    Z = np.asarray(xi, dtype=np.float64)[None, :]
    labels = None if label is None else np.asarray([label], dtype=np.int64)
    vals, _ = loss_values_batch(loss, model, np.asarray(phi, dtype=np.float64), Z, labels)
    return float(vals[0])


def loss_grad_phi(loss, model, phi, xi, label=None) -> np.ndarray:
    Z = np.asarray(xi, dtype=np.float64)[None, :]
    labels = None if label is None else np.asarray([label], dtype=np.int64)
    return loss_grad_phi_batch(loss, model, np.asarray(phi, dtype=np.float64), Z, np.ones(1), labels)


def loss_grad_xi(loss, model, phi, xi, label=None) -> np.ndarray:
    Z = np.asarray(xi, dtype=np.float64)[None, :]
    labels = None if label is None else np.asarray([label], dtype=np.int64)
    return loss_grad_xi_batch(loss, model, np.asarray(phi, dtype=np.float64), Z, labels)[0]


# ---------------------------------------------------------------------------
# Discrepancies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class W2Sq:
    """Squared-displacement discrepancy D = sum_i w_i ||x_i - T(x_i)||^2.

    lambda * D is (2 lambda)-strongly convex along generalized geodesics
    centered at the base, hence mu = 2.
    """

    @property
    def mu(self) -> float:
        return 2.0


@dataclass(frozen=True)
class KlGaussAffine:
    """Relative entropy KL(T # P, P) for Gaussian P and affine T, in closed form.

    For P = N(mean, diag(cov)) and T(x) = A x + b the pushforward is
    N(A mean + b, A diag(cov) A^T) and the relative entropy has the usual
    Gaussian closed form. The potential of P is (1/max cov)-strongly
    convex, hence mu = 1 / max(cov).
    """

    mean: np.ndarray
    cov_diag: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_1d(np.asarray(self.cov_diag, dtype=np.float64))
        if mean.shape != cov.shape or mean.ndim != 1:
            raise ConfigurationError("mean and cov_diag must be vectors of equal length")
        if (cov <= 0).any():
            raise ConfigurationError("cov_diag entries must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_diag", cov)

    @property
    def mu(self) -> float:
        return float(1.0 / self.cov_diag.max())


Discrepancy = Union[W2Sq, KlGaussAffine]


def _kl_terms(disc: KlGaussAffine, map_: Affine):
    m0, cov = disc.mean, disc.cov_diag
    A, b = map_.A, map_.b
    m1 = A @ m0 + b
    sign, logdet = np.linalg.slogdet(A)
    return m0, cov, A, b, m1, sign, logdet


def discrepancy_value(disc: Discrepancy, map_: TransportMap, base: ParticleCloud) -> float:
    """D(T # P, P) >= 0, zero iff T is the identity on the base support."""
    if isinstance(disc, W2Sq):
        return w2_monge(map_, base)
    if isinstance(disc, KlGaussAffine):
        if not isinstance(map_, Affine):
            raise ConfigurationError("the Gaussian relative-entropy discrepancy requires an affine map")
        if map_.dim != disc.mean.shape[0]:
            raise ShapeError("map/discrepancy dimension mismatch")
        m0, cov, A, b, m1, sign, logdet = _kl_terms(disc, map_)
        if sign == 0:
            return float("inf")
        trace = float(((A * A) * (cov[None, :] / cov[:, None])).sum())
        quad = float(np.sum((m1 - m0) ** 2 / cov))
        return 0.5 * (trace + quad - map_.dim) - logdet
    raise ConfigurationError(f"unknown discrepancy {type(disc).__name__}")


def discrepancy_grad(disc: Discrepancy, map_: TransportMap, base: ParticleCloud):
    """First variation of D.

    Returns (cotangents, theta_grad): `cotangents` has row i equal to the
    gradient of D with respect to the transported point T(x_i) (the
    Wasserstein first-variation field evaluated on the particles);
    `theta_grad` is the exact closed-form parameter gradient when one
    exists (Gaussian relative entropy), else None.
    """
    Z = map_.apply(base.points)
    if isinstance(disc, W2Sq):
        return 2.0 * (Z - base.points), None
    if isinstance(disc, KlGaussAffine):
        if not isinstance(map_, Affine):
            raise ConfigurationError("the Gaussian relative-entropy discrepancy requires an affine map")
        m0, cov, A, b, m1, sign, logdet = _kl_terms(disc, map_)
        if sign == 0:
            raise ValidationError("relative entropy undefined: affine map is singular")
        # Field: grad log(q/p)(z) = cov^{-1}(z - m0) - Sigma1^{-1}(z - m1).
        Sigma1 = (A * cov[None, :]) @ A.T
        cot = (Z - m0) / cov - np.linalg.solve(Sigma1, (Z - m1).T).T
        # Direct parameter gradient of the closed form.
        Ainv_T = np.linalg.inv(A).T
        gA = (A * cov[None, :]) / cov[:, None] - Ainv_T + np.outer((m1 - m0) / cov, m0)
        gb = (m1 - m0) / cov
        return cot, np.concatenate([gA.ravel(), gb])
    raise ConfigurationError(f"unknown discrepancy {type(disc).__name__}")


# ---------------------------------------------------------------------------
# Problem specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    """One ambiguity component: loss, reference cloud, discrepancy, map family.

    `map_template` fixes the family (and any structural data such as
    feature centers); its `identity_like()` is the inner solver's cold
    start.
    """

    loss: LossKind
    reference: ParticleCloud
    discrepancy: Discrepancy
    map_template: TransportMap

    def model_dim_mismatch(self, model) -> bool:
        if isinstance(self.loss, (QuadraticTest, QuadraticPhi)):
            return False
        return model.dim != self.reference.dim


class ProblemSpec:
    """Full problem data: components, shared decision model, constants.

    Constants rho (weak convexity/concavity modulus) and lipschitz are
    configuration inputs, not estimates. Construction rejects specs whose
    regularization is too weak for the strong-concavity regime, i.e. with
    lambda * mu <= rho for some component.
    """

    def __init__(self, components: Sequence[Component], model: DecisionModel,
                 lam: float, rho: float, lipschitz: float):
        components = list(components)
        if not components:
            raise ConfigurationError("need at least one component")
        lam = float(lam)
        rho = float(rho)
        lipschitz = float(lipschitz)
        if lam <= 0:
            raise ConfigurationError(f"lambda must be > 0, got {lam}")
        if rho < 0:
            raise ConfigurationError(f"rho must be >= 0, got {rho}")
        if lipschitz < 0:
            raise ConfigurationError(f"lipschitz must be >= 0, got {lipschitz}")

        for idx, comp in enumerate(components):
            ref = comp.reference
            if comp.map_template.dim != ref.dim:
                raise ShapeError(f"component {idx}: map dimension {comp.map_template.dim} "
                                 f"!= reference dimension {ref.dim}")
            if isinstance(comp.loss, _F_MEDIATED) and comp.loss.sign is None and ref.labels is None:
                raise ConfigurationError(f"component {idx}: loss requires labeled data")
            if isinstance(comp.discrepancy, KlGaussAffine):
                if not isinstance(comp.map_template, Affine):
                    raise ConfigurationError(
                        f"component {idx}: the Gaussian relative-entropy discrepancy "
                        "requires the affine map family")
                if comp.discrepancy.mean.shape[0] != ref.dim:
                    raise ShapeError(f"component {idx}: discrepancy dimension mismatch")
            if comp.model_dim_mismatch(model):
                raise ShapeError(f"component {idx}: model dimension {model.dim} "
                                 f"!= reference dimension {ref.dim}")
            margin = lam * comp.discrepancy.mu - rho
            if margin <= 0:
                raise ConfigurationError(
                    f"component {idx}: regularization too weak for the strongly concave "
                    f"inner-problem regime: lambda * mu = {lam * comp.discrepancy.mu:g} "
                    f"must exceed rho = {rho:g}")

        self.components = components
        self.model = model
        self.lam = lam
        self.rho = rho
        self.lipschitz = lipschitz

    @property
    def kappa(self) -> float:
        """Strong-concavity margin lambda * mu - rho (worst component)."""
        return min(self.lam * c.discrepancy.mu - self.rho for c in self.components)

    def identity_maps(self) -> List[TransportMap]:
        return [c.map_template.identity_like() for c in self.components]

    def _check_maps(self, maps):
        if len(maps) != len(self.components):
            raise ShapeError(f"expected {len(self.components)} maps, got {len(maps)}")


# ---------------------------------------------------------------------------
# Objective assembly
# ---------------------------------------------------------------------------

def objective_H(spec: ProblemSpec, phi, maps: Sequence[TransportMap]) -> float:
    """H(phi, Q) = sum_c [ E_{Q_c} loss - lambda * D_c ] on the particles."""
    return objective_stats(spec, phi, maps)["H"]


def objective_stats(spec: ProblemSpec, phi, maps: Sequence[TransportMap]) -> dict:
    """H plus per-component terms and the exponential-clamp flag."""
    spec._check_maps(maps)
    phi = np.asarray(phi, dtype=np.float64)
    total = 0.0
    risks, discs = [], []
    clamped = False
    for comp, map_ in zip(spec.components, maps):
        Z = map_.apply(comp.reference.points)
        vals, clamp = loss_values_batch(comp.loss, spec.model, phi, Z, comp.reference.labels)
        clamped = clamped or clamp
        risk = float(np.dot(comp.reference.weights, vals))
        dval = discrepancy_value(comp.discrepancy, map_, comp.reference)
        risks.append(risk)
        discs.append(dval)
        total += risk - spec.lam * dval
    return {"H": total, "risks": risks, "discrepancies": discs, "exp_clamped": clamped}


def subgrad_phi(spec: ProblemSpec, phi, maps: Sequence[TransportMap]) -> np.ndarray:
    """Element of the phi-subdifferential of H with the maps held fixed.

    For smooth losses and models this is the exact gradient of
    phi -> objective_H(spec, phi, maps).
    """
    spec._check_maps(maps)
    phi = np.asarray(phi, dtype=np.float64)
    g = np.zeros_like(phi)
    for comp, map_ in zip(spec.components, maps):
        Z = map_.apply(comp.reference.points)
        g += loss_grad_phi_batch(comp.loss, spec.model, phi, Z,
                                 comp.reference.weights, comp.reference.labels)
    return g


def inner_gradient_field(spec: ProblemSpec, phi, maps: Sequence[TransportMap],
                         prox: Optional[Tuple[Sequence[TransportMap], float]] = None
                         ) -> List[np.ndarray]:
    """Per-component first-variation field of -H (+ proximal term).

    Row i of component c's field is

        g_i = -grad_z l(f_phi, T_c(x_i)) + lambda * (D_c cotangent at x_i)
              + (1/gamma) (T_c(x_i) - T_prev,c(x_i))        [when prox given]

    i.e. the particle realization of a strong subgradient of the
    functional being minimized by the inner step. Its weighted norm (see
    `certificate_norm`) is the inner optimality certificate.
    """
    spec._check_maps(maps)
    phi = np.asarray(phi, dtype=np.float64)
    fields = []
    if prox is not None:
        prev_maps, gamma = prox
        spec._check_maps(prev_maps)
        if not gamma > 0:
            raise ConfigurationError(f"gamma must be > 0, got {gamma}")
    for idx, (comp, map_) in enumerate(zip(spec.components, maps)):
        Z = map_.apply(comp.reference.points)
        g = -loss_grad_xi_batch(comp.loss, spec.model, phi, Z, comp.reference.labels)
        cot, _ = discrepancy_grad(comp.discrepancy, map_, comp.reference)
        g = g + spec.lam * cot
        if prox is not None:
            g = g + (Z - prev_maps[idx].apply(comp.reference.points)) / gamma
        fields.append(g)
    return fields


def certificate_norm(spec: ProblemSpec, fields: Sequence[np.ndarray]) -> float:
    """Weighted L2 norm of the field over the transported particles:
    sqrt(sum_c sum_i w_i ||g_{c,i}||^2)."""
    total = 0.0
    for comp, g in zip(spec.components, fields):
        total += float(np.dot(comp.reference.weights, np.einsum("ij,ij->i", g, g)))
    return float(np.sqrt(total))


def maps_distance(spec: ProblemSpec, maps1: Sequence[TransportMap],
                  maps2: Sequence[TransportMap]) -> float:
    """Product-space map distance sqrt(sum_c dist_c^2) over the base clouds."""
    spec._check_maps(maps1)
    spec._check_maps(maps2)
    total = 0.0
    for comp, t1, t2 in zip(spec.components, maps1, maps2):
        total += map_l2_distance(t1, t2, comp.reference) ** 2
    return float(np.sqrt(total))
