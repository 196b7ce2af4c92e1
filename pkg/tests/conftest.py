"""Shared testbed builders.

Three problem families recur across the suite:

* the quadratic testbed (phi-independent quadratic loss, squared
  displacement discrepancy) whose worst case is T*(x) = 2 lam/(2 lam - a) x;
* the quadratic-in-phi synthetic whose max function is exactly
  V(phi) = (beta/2)||phi||^2;
* the two-component adversarial-logistic testbed (one ambiguity
  component per class with fixed detector signs).
"""

import numpy as np

import wass_dro as wd


def quadratic_spec(n=2000, seed=11, d=2, alpha=0.5, lam=2.0, rho=0.5, lipschitz=1.0):
    ref = wd.Gaussian(np.zeros(d), np.ones(d))
    cloud = wd.sample(ref, n, seed)
    comp = wd.Component(loss=wd.QuadraticTest(alpha=alpha), reference=cloud,
                        discrepancy=wd.W2Sq(), map_template=wd.Affine.identity(d))
    model = wd.LinearModel(d)
    return wd.ProblemSpec([comp], model, lam=lam, rho=rho, lipschitz=lipschitz)


def quadratic_phi_spec(n=200, seed=3, beta=1.0, lam=1.0, rho=0.5, lipschitz=2.0,
                       radius=2.0, phi0=(1.5, 0.0, 1.0)):
    ref = wd.Gaussian(np.zeros(2), np.ones(2))
    cloud = wd.sample(ref, n, seed)
    comp = wd.Component(loss=wd.QuadraticPhi(beta=beta), reference=cloud,
                        discrepancy=wd.W2Sq(), map_template=wd.Affine.identity(2))
    model = wd.LinearModel(2, phi0=list(phi0), constraint=wd.Ball(radius))
    return wd.ProblemSpec([comp], model, lam=lam, rho=rho, lipschitz=lipschitz)


def logistic_spec(n=200, seed=5, sep=1.0, sig=0.5, lam=2.0, rho=0.25,
                  lipschitz=1.5, radius=1.0, phi0=(0.3, -0.3, 0.1)):
    """Two-component robust classification testbed: class +1 particles with
    detector sign -1 and class -1 particles with sign +1."""
    m = sep / np.sqrt(2.0)
    refp = wd.Gaussian([m, m], [sig ** 2, sig ** 2])
    refm = wd.Gaussian([-m, -m], [sig ** 2, sig ** 2])
    cp = wd.sample(refp, n, seed)
    cm = wd.sample(refm, n, seed + 1)
    comps = [wd.Component(wd.Logistic(sign=-1), cp, wd.W2Sq(), wd.Affine.identity(2)),
             wd.Component(wd.Logistic(sign=+1), cm, wd.W2Sq(), wd.Affine.identity(2))]
    model = wd.LinearModel(2, phi0=list(phi0), constraint=wd.Ball(radius))
    return wd.ProblemSpec(comps, model, lam=lam, rho=rho, lipschitz=lipschitz)


def labeled_blobs(n=200, seed=5, sep=1.0, sig=0.6):
    """Single labeled cloud with two Gaussian blobs (labels +-1)."""
    rng = wd.make_rng(seed)
    half = n // 2
    m = sep / np.sqrt(2.0)
    xp = m + sig * rng.standard_normal((half, 2))
    xm = -m + sig * rng.standard_normal((n - half, 2))
    pts = np.vstack([xp, xm])
    labs = np.concatenate([np.ones(half, dtype=int), -np.ones(n - half, dtype=int)])
    return wd.ParticleCloud(pts, labels=labs, seed=seed)


def tight_jko(eps_prime=1e-9, i_max=60, step_size=0.2, max_iter=2000, grad_tol=1e-11,
              gamma=None, warm_start=True):
    """Theta-converged solve config: unreachable certificate target plus a
    tight parameter-gradient stop."""
    return wd.JkoConfig(gamma=gamma, i_max=i_max, eps_prime=eps_prime,
                        warm_start=warm_start,
                        inner=wd.InnerOptConfig(step_size=step_size, max_iter=max_iter,
                                                grad_tol=grad_tol))


def fd_gradient(f, x, h=1e-6):
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def rel_err(approx, exact):
    approx = np.atleast_1d(np.asarray(approx, dtype=np.float64))
    exact = np.atleast_1d(np.asarray(exact, dtype=np.float64))
    scale = max(float(np.linalg.norm(exact)), 1e-12)
    return float(np.linalg.norm(approx - exact)) / scale
