import math

import numpy as np
import pytest

import wass_dro as wd
from wass_dro.jko import JkoTrace

from conftest import logistic_spec, quadratic_phi_spec, quadratic_spec, tight_jko


# ---------------------------------------------------------------------------
# Moreau envelope gradient
# ---------------------------------------------------------------------------

def test_moreau_gradient_closed_form_quadratic():
    spec = quadratic_phi_spec()
    phi = np.array([1.5, 0.0, 1.0])
    res = wd.moreau_grad(spec, phi, r=1.0, tol=1e-8)
    # V(u) = ||u||^2 / 2: prox = phi/2, gradient = phi/2.
    assert np.allclose(res.prox_point, phi / 2.0, atol=1e-6)
    assert np.allclose(res.gradient, phi / 2.0, atol=1e-6)
    assert np.array_equal(res.gradient, 1.0 * (phi - res.prox_point))


def test_moreau_gradient_vanishes_at_minimizer():
    spec = quadratic_phi_spec()
    res = wd.moreau_grad(spec, np.zeros(3), r=1.0, tol=1e-8)
    assert np.linalg.norm(res.gradient) <= 1e-8


def test_moreau_requires_r_above_rho():
    spec = quadratic_phi_spec(rho=0.5)
    with pytest.raises(wd.ConfigurationError):
        wd.moreau_grad(spec, np.zeros(3), r=0.4)


# ---------------------------------------------------------------------------
# Danskin check
# ---------------------------------------------------------------------------

def test_danskin_zero_on_phi_independent_testbed():
    spec = quadratic_spec(n=400, seed=51)
    err = wd.danskin_check(spec, np.array([0.2, -0.1, 0.3]), h=1e-4,
                           inner=tight_jko(eps_prime=1e-6, grad_tol=1e-10))
    assert err == pytest.approx(0.0, abs=1e-12)


def test_danskin_error_small_on_smooth_testbed():
    spec = logistic_spec(n=150, seed=52)
    err = wd.danskin_check(spec, np.array([0.3, -0.2, 0.05]), h=1e-4, inner=tight_jko())
    assert err <= 1e-3


def test_danskin_error_shrinks_with_h():
    # exponential loss has strong third derivatives, so the h^2 bias is
    # visible: the h = 1e-3 error dominates the h = 1e-4 one.
    ref = wd.Gaussian(np.zeros(2), np.ones(2))
    cloud = wd.sample(ref, 120, 53)
    comp = wd.Component(wd.Exponential(sign=1), cloud, wd.W2Sq(), wd.Affine.identity(2))
    spec = wd.ProblemSpec([comp], wd.LinearModel(2, constraint=wd.Ball(1.0)), lam=3.0,
                          rho=0.5, lipschitz=1.0)
    phi = np.array([0.4, 0.2, -0.1])
    cfg = tight_jko()
    coarse = wd.danskin_check(spec, phi, h=1e-3, inner=cfg)
    fine = wd.danskin_check(spec, phi, h=1e-4, inner=cfg)
    assert coarse + 1e-12 >= fine


# ---------------------------------------------------------------------------
# weak convexity probe
# ---------------------------------------------------------------------------

def test_weak_convexity_zero_violations_on_convex_testbed():
    spec = logistic_spec(n=80, seed=54, rho=0.0)
    rep = wd.weak_convexity_probe(spec, n_triples=40, seed=1,
                                  inner=wd.JkoConfig(eps_prime=0.02,
                                                     inner=wd.InnerOptConfig(step_size=0.2,
                                                                             max_iter=1500,
                                                                             grad_tol=1e-9)))
    assert rep.passed and rep.violations == 0


def test_weak_convexity_overestimated_rho_still_passes():
    spec = logistic_spec(n=80, seed=54, rho=2.5)
    rep = wd.weak_convexity_probe(spec, n_triples=25, seed=2,
                                  inner=wd.JkoConfig(eps_prime=0.02,
                                                     inner=wd.InnerOptConfig(step_size=0.2,
                                                                             max_iter=1500,
                                                                             grad_tol=1e-9)))
    assert rep.passed


def test_weak_convexity_detects_nonconvexity_with_underreported_rho():
    # MLP max function is genuinely nonconvex; claiming rho ~ 0 must fail.
    rng = wd.make_rng(3)
    cloud = wd.sample(wd.Gaussian(np.zeros(1), np.ones(1)), 60, 55)
    model = wd.MlpSoftplus([1, 2], phi0=list(0.5 * rng.standard_normal(7)),
                           constraint=wd.Ball(3.0))
    comp = wd.Component(wd.Logistic(sign=1), cloud, wd.W2Sq(), wd.Affine.identity(1))
    spec = wd.ProblemSpec([comp], model, lam=50.0, rho=1e-6, lipschitz=1.0)
    rep = wd.weak_convexity_probe(spec, n_triples=60, seed=4,
                                  inner=wd.JkoConfig(eps_prime=1e-4,
                                                     inner=wd.InnerOptConfig(step_size=0.05,
                                                                             max_iter=800,
                                                                             grad_tol=1e-10)))
    assert not rep.passed and rep.violations > 0


def test_weak_convexity_endpoint_alpha_is_tight():
    spec = logistic_spec(n=60, seed=56, rho=0.25)
    cfg = tight_jko(eps_prime=1e-8, grad_tol=1e-11)
    rng = wd.make_rng(5)
    from wass_dro.diagnostics import sample_in_constraint
    phi = sample_in_constraint(spec.model.constraint, 3, rng)
    psi = sample_in_constraint(spec.model.constraint, 3, rng)
    v_phi = wd.solve_inner(spec, phi, cfg).H
    v_psi = wd.solve_inner(spec, psi, cfg).H
    for a, expect in ((1.0, v_phi), (0.0, v_psi)):
        mid = a * phi + (1.0 - a) * psi
        v_mid = wd.solve_inner(spec, mid, cfg).H
        assert v_mid == pytest.approx(expect, abs=1e-9)


# ---------------------------------------------------------------------------
# strong convexity along interpolations (discrepancy probe)
# ---------------------------------------------------------------------------

def test_agg_convexity_w2sq_is_equality_tight():
    base = wd.sample(wd.Gaussian(np.zeros(2), np.ones(2)), 300, 57)
    rep = wd.agg_convexity_probe(wd.W2Sq(), base, wd.Affine.identity(2), lam=2.0,
                                 n_curves=100, seed=6)
    assert rep.passed
    assert abs(rep.worst_margin) < 1e-10


def test_agg_convexity_kl_zero_violations():
    base = wd.sample(wd.Gaussian(np.zeros(2), np.ones(2)), 300, 58)
    disc = wd.KlGaussAffine(np.zeros(2), np.ones(2))
    rep = wd.agg_convexity_probe(disc, base, wd.Affine.identity(2), lam=2.0,
                                 n_curves=100, seed=7)
    assert rep.passed and rep.violations == 0


def test_agg_convexity_kl_shift_curve_is_exact():
    # shift maps b1 = 0, b2 = 1 on N(0,1): KL along the curve is exactly
    # quadratic, so the modulus-lambda inequality is met with equality.
    base = wd.sample(wd.Gaussian([0.0], [1.0]), 200, 59)
    disc = wd.KlGaussAffine([0.0], [1.0])
    lam = 2.0
    t1 = wd.Affine(np.eye(1), np.zeros(1))
    t2 = wd.Affine(np.eye(1), np.ones(1))
    w2 = wd.map_l2_distance(t1, t2, base) ** 2
    assert w2 == pytest.approx(1.0, abs=1e-12)
    for t in (0.25, 0.5, 0.75):
        mid = wd.Affine(np.eye(1), np.array([t]))
        lhs = lam * wd.discrepancy_value(disc, mid, base)
        rhs = (1 - t) * 0.0 + t * lam * 0.5 - 0.5 * (lam * disc.mu) * t * (1 - t) * w2
        assert lhs == pytest.approx(rhs, abs=1e-12)


# ---------------------------------------------------------------------------
# contraction fit
# ---------------------------------------------------------------------------

def _synthetic_trace(d2_values, eps_prime, gamma, kappa):
    tr = JkoTrace(gamma=gamma, kappa=kappa, eps_prime=eps_prime)
    for i, d2 in enumerate(d2_values):
        tr.append(i, 0.0, None if i == 0 else eps_prime, None if i == 0 else 0.0,
                  math.sqrt(d2))
    return tr


def test_contraction_fit_exact_geometric_sequence():
    kappa, gamma = 3.5, 0.5
    base = 1.0 + gamma * kappa / 2.0
    d2 = [4.0 * base ** (-i) for i in range(12)]
    fit = wd.contraction_fit(_synthetic_trace(d2, 1e-4, gamma, kappa), kappa, gamma)
    assert fit.passed
    assert fit.empirical_rate == pytest.approx(1.0 / base, rel=1e-6)
    assert fit.bound_rate == pytest.approx(1.0 / base)


def test_contraction_fit_floor_dominated_sequence():
    kappa, gamma = 3.5, 0.5
    floor = 4.0 * 1e-4 ** 2 / kappa ** 2
    d2 = [floor * 0.9] * 8
    fit = wd.contraction_fit(_synthetic_trace(d2, 1e-4, gamma, kappa), kappa, gamma)
    assert fit.passed
    assert fit.floor_dominated
    assert fit.empirical_rate is None and fit.inconclusive


def test_contraction_fit_short_prefloor_is_inconclusive():
    kappa, gamma = 2.0, 0.5
    floor = 4.0 * 1e-3 ** 2 / kappa ** 2
    d2 = [floor * 10.0, floor * 0.5, floor * 0.5, floor * 0.5]
    fit = wd.contraction_fit(_synthetic_trace(d2, 1e-3, gamma, kappa), kappa, gamma)
    assert fit.inconclusive
    assert fit.empirical_rate is None


def test_contraction_fit_flags_violation():
    kappa, gamma = 3.5, 0.5
    d2 = [1.0, 0.9, 0.85, 0.8]  # decays far slower than the bound
    fit = wd.contraction_fit(_synthetic_trace(d2, 1e-6, gamma, kappa), kappa, gamma)
    assert not fit.passed


# ---------------------------------------------------------------------------
# solution mapping and gradient mapping
# ---------------------------------------------------------------------------

def test_solution_lipschitz_identical_points():
    spec = quadratic_spec(n=200, seed=60)
    rep = wd.solution_lipschitz_probe(spec, n_pairs=3, seed=8, perturbation=0.0,
                                      inner=wd.JkoConfig(eps_prime=1e-4,
                                                         inner=wd.InnerOptConfig(step_size=0.2,
                                                                                 max_iter=2000)))
    assert rep.passed
    # phi-independent worst case: distances are exactly zero
    assert rep.worst_margin <= 0.0


def test_solution_lipschitz_needs_margin():
    spec = logistic_spec(n=32, seed=61, lam=0.9, lipschitz=2.0)  # lam*mu = 1.8 < L
    rep = wd.solution_lipschitz_probe(spec, n_pairs=2, seed=9)
    assert rep.inconclusive


def test_gradient_mapping_free_constraint_identity():
    spec = quadratic_phi_spec()
    # Free model: rebuild with no constraint
    model = wd.LinearModel(2, phi0=[1.0, 0.5, -0.5])
    comp = spec.components[0]
    free_spec = wd.ProblemSpec([wd.Component(comp.loss, comp.reference, comp.discrepancy,
                                             comp.map_template)], model,
                               lam=spec.lam, rho=spec.rho, lipschitz=spec.lipschitz)
    eta = 0.2
    phi = np.array([1.0, 0.5, -0.5])
    val = wd.gradient_mapping_norm(free_spec, phi, eta, inner=tight_jko(eps_prime=1e-7))
    # V = ||phi||^2/2, grad = phi: surrogate = (1/eta + L) eta ||phi||
    expected = (1.0 / eta + free_spec.lipschitz) * eta * np.linalg.norm(phi)
    assert val == pytest.approx(expected, rel=1e-6)


def test_gradient_mapping_zero_at_boundary_optimum():
    # Box constraint whose feasible set keeps the iterate pinned: the
    # projected step returns to phi, so the surrogate vanishes.
    model = wd.LinearModel(2, phi0=[1.0, 1.0, 1.0],
                           constraint=wd.Box(np.ones(3), np.ones(3) * 2.0))
    cloud = wd.sample(wd.Gaussian(np.zeros(2), np.ones(2)), 50, 62)
    comp = wd.Component(wd.QuadraticPhi(beta=1.0), cloud, wd.W2Sq(), wd.Affine.identity(2))
    spec = wd.ProblemSpec([comp], model, lam=1.0, rho=0.5, lipschitz=2.0)
    # at phi = lower corner, -grad points outward: projection absorbs it
    val = wd.gradient_mapping_norm(spec, np.ones(3), 0.1, inner=tight_jko(eps_prime=1e-7))
    assert val == pytest.approx(0.0, abs=1e-12)
