"""Numerical certification of the convergence theory at desk scale.

Every probe evaluates the max function

    V(phi) = max_Q H(phi, Q)

through the same inner solver the algorithm uses (`jko.solve_inner`), so
a passing probe certifies the artifact as built rather than an idealized
oracle. Tolerances compose additively from the certified inner-solve
errors and every report states the effective tolerance it used.

Probes:

* `moreau_grad`            -- envelope gradient r * (phi - prox), prox by
                              nested projected descent with tight solves;
* `danskin_check`          -- gradient of the max function vs central
                              differences at the solved worst case;
* `weak_convexity_probe`   -- secant inequality for V with modulus rho;
* `agg_convexity_probe`    -- strong convexity of lambda * D along map
                              interpolations centered at the base;
* `contraction_fit`        -- per-step geometric decay of the proximal
                              iteration against its guaranteed rate;
* `solution_lipschitz_probe` -- worst-case map distance vs the
                              (2 lam mu - L)/(lam mu - L) bound;
* `gradient_mapping_norm`  -- projected-step stationarity surrogate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .errors import ConfigurationError
from .jko import JkoConfig, JkoTrace, solve_inner
from .measures import ParticleCloud, make_rng
from .objective import (Affine, Ball, Box, Constraint, Discrepancy, Free,
                        ProblemSpec, QuadraticTest, W2Sq, discrepancy_value,
                        maps_distance, subgrad_phi)
from .solver import project
from .transport import Identity, TransportMap, map_l2_distance


@dataclass
class ProbeReport:
    """Outcome of one probe: worst margin is recorded even on pass."""

    name: str
    samples: int
    violations: int
    worst_margin: float
    tolerance: float
    passed: bool
    inconclusive: bool = False
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "inconclusive": self.inconclusive,
            "notes": self.notes,
        }


def tight_inner_config(eps_prime: float, base: Optional[JkoConfig] = None) -> JkoConfig:
    """Inner config for probe-grade solves: small certificate target and
    warm starting, with a parameter-gradient stop well below the target so
    ascent does not spin when the map family cannot zero the full field."""
    if base is None:
        base = JkoConfig()
    grad_tol = base.inner.grad_tol if base.inner.grad_tol > 0 else eps_prime * 1e-2
    return replace(base, eps_prime=eps_prime, warm_start=True,
                   inner=replace(base.inner, grad_tol=grad_tol))


def sample_in_constraint(constraint: Constraint, p: int, rng, scale: float = 1.0) -> np.ndarray:
    """Random point in the constraint set (uniform on balls/boxes,
    standard normal times `scale` when free)."""
    if isinstance(constraint, Free):
        return scale * rng.standard_normal(p)
    if isinstance(constraint, Ball):
        x = rng.standard_normal(p)
        nrm = float(np.linalg.norm(x))
        if nrm == 0.0:
            return np.zeros(p)
        radius = constraint.radius * rng.random() ** (1.0 / p)
        return x * (radius / nrm)
    if isinstance(constraint, Box):
        if constraint.lo.shape[0] != p:
            raise ConfigurationError("box constraint dimension does not match the parameter count")
        return rng.uniform(constraint.lo, constraint.hi)
    raise ConfigurationError(f"unknown constraint {type(constraint).__name__}")


# ---------------------------------------------------------------------------
# Moreau envelope gradient
# ---------------------------------------------------------------------------

@dataclass
class MoreauResult:
    gradient: np.ndarray
    prox_point: np.ndarray
    envelope_value: float
    iterations: int
    error_bound: float
    eps_inner_max: float


def moreau_grad(spec: ProblemSpec, phi, r: Optional[float] = None, tol: float = 1e-6,
                inner: Optional[JkoConfig] = None, max_pgd_iter: int = 2000) -> MoreauResult:
    """Gradient of the Moreau envelope of V at `phi`.

    Minimizes u -> V(u) + (r/2) ||phi - u||^2 over the constraint set by
    projected descent with warm-started tight inner solves (certificate
    target tol/10), stopping when the gradient mapping falls below `tol`.
    The returned gradient is exactly r * (phi - prox_point); `error_bound`
    budgets the stop tolerance and the inner-solve error against the
    (r - rho)-strong convexity of the prox subproblem.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if r is None:
        r = 2.0 * spec.rho
    if not r > spec.rho:
        raise ConfigurationError(f"need r > rho, got r={r:g}, rho={spec.rho:g}")
    if not tol > 0:
        raise ConfigurationError("tol must be > 0")
    inner_cfg = tight_inner_config(tol / 10.0, inner)
    constraint = spec.model.constraint

    u = project(phi, constraint)
    maps = spec.identity_maps()
    eps_max = 0.0

    def eval_at(u_pt, warm):
        sol = solve_inner(spec, u_pt, inner_cfg, init_maps=warm)
        g_obj = sol.H + 0.5 * r * float(np.dot(phi - u_pt, phi - u_pt))
        return sol, g_obj

    sol, g_cur = eval_at(u, maps)
    maps = sol.maps
    eps_max = max(eps_max, sol.eps_estimate)
    step = 1.0 / (r + max(spec.lipschitz, 1.0))
    gm = math.inf
    iters = 0
    while iters < max_pgd_iter:
        grad_u = subgrad_phi(spec, u, maps) + r * (u - phi)
        u_trial = project(u - step * grad_u, constraint)
        gm = float(np.linalg.norm(u - u_trial)) / step
        if gm <= tol:
            break
        sol_t, g_try = eval_at(u_trial, maps)
        accepted = g_try <= g_cur + 1e-12 * (1.0 + abs(g_cur))
        if accepted:
            u, g_cur, maps = u_trial, g_try, sol_t.maps
            eps_max = max(eps_max, sol_t.eps_estimate)
            step *= 1.5
        else:
            step *= 0.5
            if step < 1e-18:
                break
        iters += 1

    # Stop tolerance and inner-solve gradient error against the (r - rho)-
    # strong convexity of the prox subproblem.
    gm_final = gm if math.isfinite(gm) else tol
    grad_v_err = spec.lipschitz * math.sqrt(5.0) * inner_cfg.eps_prime / spec.kappa
    denom = max(r - spec.rho, 1e-12)
    error_bound = r * (gm_final + grad_v_err) / denom
    gradient = r * (phi - u)
    return MoreauResult(gradient=gradient, prox_point=u, envelope_value=g_cur,
                        iterations=iters, error_bound=error_bound, eps_inner_max=eps_max)


# ---------------------------------------------------------------------------
# Danskin gradient check
# ---------------------------------------------------------------------------

def danskin_check(spec: ProblemSpec, phi, h: float = 1e-4,
                  inner: Optional[JkoConfig] = None) -> float:
    """Max over coordinates of |grad_phi H(phi, Q*(phi)) - central difference
    of V| scaled by the difference magnitude.

    Each V evaluation is a tight inner solve warm-started from the solve
    at `phi`, so systematic inner error largely cancels in the difference.
    """
    if not h > 0:
        raise ConfigurationError("h must be > 0")
    phi = np.asarray(phi, dtype=np.float64)
    inner_cfg = tight_inner_config(1e-7 if inner is None else inner.eps_prime, inner)
    sol = solve_inner(spec, phi, inner_cfg)
    lhs = subgrad_phi(spec, phi, sol.maps)

    fd = np.zeros_like(phi)
    for j in range(phi.shape[0]):
        e = np.zeros_like(phi)
        e[j] = h
        vp = solve_inner(spec, phi + e, inner_cfg, init_maps=sol.maps).H
        vm = solve_inner(spec, phi - e, inner_cfg, init_maps=sol.maps).H
        fd[j] = (vp - vm) / (2.0 * h)

    scale = max(float(np.abs(fd).max()), 1e-12)
    return float(np.abs(lhs - fd).max() / scale)


# ---------------------------------------------------------------------------
# Weak convexity of the max function
# ---------------------------------------------------------------------------

def weak_convexity_probe(spec: ProblemSpec, n_triples: int = 200, seed: int = 0,
                         inner: Optional[JkoConfig] = None,
                         scale: float = 1.0) -> ProbeReport:
    """Secant inequality for V with the configured modulus rho:

        V(a phi + (1-a) psi) <= a V(phi) + (1-a) V(psi)
                                + rho a (1-a) / 2 * ||phi - psi||^2.

    Tolerance is 1e-6 plus three times the certified objective error per
    V evaluation.
    """
    rng = make_rng(seed)
    inner_cfg = tight_inner_config(1e-6 if inner is None else inner.eps_prime, inner)
    constraint = spec.model.constraint
    p = spec.model.n_params

    violations = 0
    worst = -math.inf
    tol_used = 0.0
    for _ in range(n_triples):
        a = float(rng.random())
        phi = sample_in_constraint(constraint, p, rng, scale)
        psi = sample_in_constraint(constraint, p, rng, scale)
        mid = a * phi + (1.0 - a) * psi
        sols = [solve_inner(spec, pt, inner_cfg) for pt in (phi, psi, mid)]
        eps = max(s.eps_estimate for s in sols)
        tol = 1e-6 + 3.0 * eps
        lhs = sols[2].H
        rhs = a * sols[0].H + (1.0 - a) * sols[1].H \
            + 0.5 * spec.rho * a * (1.0 - a) * float(np.dot(phi - psi, phi - psi))
        margin = lhs - rhs
        worst = max(worst, margin)
        tol_used = max(tol_used, tol)
        if margin > tol:
            violations += 1
    return ProbeReport(name="weak_convexity", samples=n_triples, violations=violations,
                       worst_margin=worst, tolerance=tol_used, passed=violations == 0)


# ---------------------------------------------------------------------------
# Strong convexity along generalized geodesics (discrepancy probe)
# ---------------------------------------------------------------------------

def _random_map_pair(template: TransportMap, rng, spread: float):
    """Draw a pair of maps realizing a generalized geodesic.

    Interpolating two maps from a common base traces a generalized
    geodesic only when both are optimal (gradients of convex functions);
    for the affine family that means a symmetric positive-definite linear
    part, so the random linear parts are symmetrized and kept away from
    singularity."""
    if isinstance(template, Affine):
        d = template.dim

        def draw():
            while True:
                G = spread * rng.standard_normal((d, d))
                A = np.eye(d) + 0.5 * (G + G.T)
                if np.linalg.eigvalsh(A).min() > 0.2:
                    b = spread * rng.standard_normal(d)
                    return Affine(A, b)
        return draw(), draw()
    if template.n_params == 0:
        raise ConfigurationError("the curve probe needs a map family with free parameters")
    p = template.n_params
    return (template.with_params(spread * rng.standard_normal(p)),
            template.with_params(spread * rng.standard_normal(p)))


def agg_convexity_probe(discrepancy: Discrepancy, base: ParticleCloud,
                        map_template: TransportMap, lam: float,
                        n_curves: int = 100, seed: int = 0, spread: float = 0.3,
                        tolerance: float = 1e-8) -> ProbeReport:
    """Strong convexity of lambda * D along map interpolations.

    Curves are t -> ((1-t) T1 + t T2) # base (parameter interpolation,
    which coincides with map interpolation for the parameter-linear
    families); modulus lambda * mu is taken from the discrepancy. Checks

        lam D(T_t) <= (1-t) lam D(T1) + t lam D(T2)
                      - (lam mu / 2) t (1-t) dist(T1, T2)^2

    on the grid t in {0.1, ..., 0.9}.
    """
    rng = make_rng(seed)
    modulus = lam * discrepancy.mu
    t_grid = np.linspace(0.1, 0.9, 9)
    violations = 0
    worst = -math.inf
    samples = 0
    for _ in range(n_curves):
        t1, t2 = _random_map_pair(map_template, rng, spread)
        d1 = lam * discrepancy_value(discrepancy, t1, base)
        d2 = lam * discrepancy_value(discrepancy, t2, base)
        if not (math.isfinite(d1) and math.isfinite(d2)):
            continue
        w2 = map_l2_distance(t1, t2, base) ** 2
        th1, th2 = t1.params, t2.params
        for t in t_grid:
            tt = t1.with_params((1.0 - t) * th1 + t * th2)
            dt = lam * discrepancy_value(discrepancy, tt, base)
            rhs = (1.0 - t) * d1 + t * d2 - 0.5 * modulus * t * (1.0 - t) * w2
            margin = dt - rhs
            samples += 1
            worst = max(worst, margin)
            if margin > tolerance:
                violations += 1
    return ProbeReport(name="agg_convexity", samples=samples, violations=violations,
                       worst_margin=worst, tolerance=tolerance, passed=violations == 0)


# ---------------------------------------------------------------------------
# Contraction-rate fit for the proximal iteration
# ---------------------------------------------------------------------------

@dataclass
class ContractionFit:
    empirical_rate: Optional[float]
    bound_rate: float
    passed: bool
    floor: float
    floor_dominated: bool
    inconclusive: bool
    n_prefloor: int
    worst_ratio: float


def contraction_fit(trace: JkoTrace, kappa: float, gamma: float,
                    slack: float = 1.05) -> ContractionFit:
    """Check the guaranteed geometric decay of the proximal iteration.

    Requires the trace to carry distances to an analytic optimum. Passes
    iff every step i satisfies

        dist_i^2 <= slack * ((1 + gamma kappa / 2)^{-i} dist_0^2
                             + 4 eps'^2 / kappa^2),

    and fits the pre-floor decay rate by least squares on
    log(dist^2 - floor). Fewer than 3 pre-floor points leave the fitted
    rate inconclusive (the bound check still stands).
    """
    if any(d is None for d in trace.dist_to_opt):
        return ContractionFit(None, 1.0 / (1.0 + gamma * kappa / 2.0), False, math.nan,
                              False, True, 0, math.nan)
    d2 = np.asarray([d ** 2 for d in trace.dist_to_opt])
    floor = 4.0 * trace.eps_prime ** 2 / kappa ** 2
    base = 1.0 + gamma * kappa / 2.0
    bound_rate = 1.0 / base

    idx = np.arange(d2.shape[0])
    bound = base ** (-idx.astype(np.float64)) * d2[0] + floor
    ratios = d2 / np.maximum(bound, 1e-300)
    passed = bool((ratios <= slack).all())
    worst_ratio = float(ratios.max())

    prefloor = idx[d2 > 2.0 * floor]
    floor_dominated = prefloor.shape[0] == 0
    if prefloor.shape[0] < 3:
        return ContractionFit(None, bound_rate, passed, floor, floor_dominated,
                              True, int(prefloor.shape[0]), worst_ratio)
    ys = np.log(d2[prefloor] - floor)
    slope = float(np.polyfit(prefloor.astype(np.float64), ys, 1)[0])
    empirical_rate = float(np.exp(slope))
    return ContractionFit(empirical_rate, bound_rate, passed, floor, floor_dominated,
                          False, int(prefloor.shape[0]), worst_ratio)


# ---------------------------------------------------------------------------
# Lipschitz continuity of the solution mapping
# ---------------------------------------------------------------------------

def solution_lipschitz_probe(spec: ProblemSpec, n_pairs: int = 50, seed: int = 0,
                             perturbation: float = 0.1,
                             inner: Optional[JkoConfig] = None,
                             scale: float = 1.0) -> ProbeReport:
    """Worst-case map distance against the smooth-regime bound

        dist(Q*(phi1), Q*(phi2)) <= (2 lam mu - L) / (lam mu - L) * ||phi1 - phi2||

    plus twice the certified map tolerance sqrt(5) eps' / kappa. Requires
    lam mu > L; a configuration with rho != L is noted (the constant is
    stated for weak-concavity modulus equal to L)."""
    lam_mu = spec.kappa + spec.rho
    L = spec.lipschitz
    if L <= 0 or lam_mu <= L:
        return ProbeReport(name="solution_lipschitz", samples=0, violations=0,
                           worst_margin=math.nan, tolerance=math.nan, passed=False,
                           inconclusive=True,
                           notes=f"bound undefined: needs lambda*mu > L > 0 "
                                 f"(lambda*mu={lam_mu:g}, L={L:g})")
    notes = ""
    if abs(spec.rho - L) > 1e-12:
        notes = (f"constant stated for weak-concavity modulus equal to L; "
                 f"configured rho={spec.rho:g} differs from L={L:g}")

    rng = make_rng(seed)
    inner_cfg = tight_inner_config(1e-7 if inner is None else inner.eps_prime, inner)
    constraint = spec.model.constraint
    p = spec.model.n_params
    const = (2.0 * lam_mu - L) / (lam_mu - L)
    map_tol = math.sqrt(5.0) * inner_cfg.eps_prime / spec.kappa

    violations = 0
    worst = -math.inf
    certified = True
    for _ in range(n_pairs):
        phi1 = sample_in_constraint(constraint, p, rng, scale)
        phi2 = project(phi1 + perturbation * rng.standard_normal(p), constraint)
        sol1 = solve_inner(spec, phi1, inner_cfg)
        sol2 = solve_inner(spec, phi2, inner_cfg, init_maps=sol1.maps)
        certified = certified and sol1.certified and sol2.certified
        dist = maps_distance(spec, sol1.maps, sol2.maps)
        bound = const * float(np.linalg.norm(phi1 - phi2)) + 2.0 * map_tol
        margin = dist - bound
        worst = max(worst, margin)
        if margin > 0:
            violations += 1
    return ProbeReport(name="solution_lipschitz", samples=n_pairs, violations=violations,
                       worst_margin=worst, tolerance=2.0 * map_tol,
                       passed=violations == 0, inconclusive=not certified,
                       notes=notes if certified else (notes + "; uncertified inner solves").strip("; "))


# ---------------------------------------------------------------------------
# Projected-step stationarity surrogate
# ---------------------------------------------------------------------------

def gradient_mapping_norm(spec: ProblemSpec, phi, eta: float,
                          inner: Optional[JkoConfig] = None) -> float:
    """(1/eta + L) * ||proj(phi - eta grad_phi H(phi, Q*(phi))) - phi||
    with a tight inner solve for the worst case."""
    if not eta > 0:
        raise ConfigurationError("eta must be > 0")
    phi = np.asarray(phi, dtype=np.float64)
    inner_cfg = tight_inner_config(1e-7 if inner is None else inner.eps_prime, inner)
    sol = solve_inner(spec, phi, inner_cfg)
    g = subgrad_phi(spec, phi, sol.maps)
    moved = project(phi - eta * g, spec.model.constraint)
    return (1.0 / eta + spec.lipschitz) * float(np.linalg.norm(moved - phi))


# ---------------------------------------------------------------------------
# Analytic optimum for the quadratic testbed
# ---------------------------------------------------------------------------

def analytic_quadratic_optimum(spec: ProblemSpec) -> Optional[List[TransportMap]]:
    """Closed-form worst-case maps when every component is the quadratic
    testbed (phi-independent quadratic loss with the squared-displacement
    discrepancy and an affine-capable family): T*(x) = 2 lam / (2 lam - alpha) x.

    Returns None when the problem is not of this form."""
    maps = []
    for comp in spec.components:
        if not isinstance(comp.loss, QuadraticTest):
            return None
        if not isinstance(comp.discrepancy, W2Sq):
            return None
        alpha = comp.loss.alpha
        if alpha >= 2.0 * spec.lam:
            return None
        scale = 2.0 * spec.lam / (2.0 * spec.lam - alpha)
        d = comp.reference.dim
        if isinstance(comp.map_template, (Affine, Identity)):
            maps.append(Affine(scale * np.eye(d), np.zeros(d)))
        else:
            return None
    return maps
