"""Outer loop: projected subgradient descent against approximate worst cases.

Each outer iteration solves the inner maximization to an epsilon-argmax
(via the proximal scheme in `jko`), takes one subgradient of the loss
expectation under that worst case, and projects back onto the constraint
set:

    phi_{k+1} = proj_Phi(phi_k - eta * zeta(phi_k, Q_k)).

With step size eta = 1/sqrt(K) the best iterate satisfies the
O(K^{-1/2} + eps) bound on the squared Moreau-envelope gradient; in the
smooth regime the constant step eta = (lam*mu - L) / (2 (4 lam*mu - 3L) L)
yields per-iteration descent up to the inner-solve error. The returned
solution is the iterate minimizing the per-iteration gradient-mapping
surrogate ||phi_k - proj(phi_k - eta zeta_k)|| / eta (the theory
guarantees a good iterate exists, not which one).

A non-certified inner solve is recorded and the run continues; the
terminal report downgrades its guarantee flag instead of aborting.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import List, Union

import numpy as np

from .errors import ConfigurationError
from .jko import JkoConfig, solve_inner
from .objective import Ball, Box, Constraint, Free, ProblemSpec, subgrad_phi

_FMT = "{:.17g}"


def project(phi, constraint: Constraint) -> np.ndarray:
    """Euclidean projection onto the constraint set (idempotent, nonexpansive)."""
    phi = np.asarray(phi, dtype=np.float64)
    if isinstance(constraint, Free):
        return phi.copy()
    if isinstance(constraint, Box):
        return np.clip(phi, constraint.lo, constraint.hi)
    if isinstance(constraint, Ball):
        nrm = float(np.linalg.norm(phi))
        if nrm <= constraint.radius:
            return phi.copy()
        return phi * (constraint.radius / nrm)
    raise ConfigurationError(f"unknown constraint {type(constraint).__name__}")


@dataclass(frozen=True)
class OuterConfig:
    """Outer iteration count, step size policy, inner budget, seed."""

    K: int
    eta: Union[float, str] = "auto"
    smooth_mode: bool = False
    inner: JkoConfig = field(default_factory=JkoConfig)
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        if isinstance(self.eta, str):
            if self.eta != "auto":
                raise ConfigurationError(f"eta must be a positive number or 'auto', got {self.eta!r}")
        elif not float(self.eta) > 0:
            raise ConfigurationError("eta must be > 0")


def resolve_eta(config: OuterConfig, spec: ProblemSpec) -> float:
    """Numeric step size: as configured, else 1/sqrt(K), else the
    smooth-regime constant when smooth_mode is set."""
    if not isinstance(config.eta, str):
        return float(config.eta)
    if config.smooth_mode:
        lam_mu = spec.kappa + spec.rho
        L = spec.lipschitz
        if L <= 0 or lam_mu <= L:
            raise ConfigurationError(
                f"smooth-mode step size needs lambda * mu > L > 0, got lambda*mu={lam_mu:g}, L={L:g}")
        return (lam_mu - L) / (2.0 * (4.0 * lam_mu - 3.0 * L) * L)
    return 1.0 / math.sqrt(config.K)


@dataclass
class SolveTrace:
    """Per-iteration record of the outer loop plus terminal accounting.

    Wall times are kept in memory only; serialized outputs must be
    deterministic functions of (config, seed).
    """

    eta: float
    k: List[int] = field(default_factory=list)
    phi: List[np.ndarray] = field(default_factory=list)
    zeta_norm: List[float] = field(default_factory=list)
    H: List[float] = field(default_factory=list)
    certificate: List[float] = field(default_factory=list)
    eps_inner: List[float] = field(default_factory=list)
    step_norm: List[float] = field(default_factory=list)
    surrogate: List[float] = field(default_factory=list)
    certified: List[bool] = field(default_factory=list)
    jko_steps_k: List[int] = field(default_factory=list)
    wall: List[float] = field(default_factory=list)
    best_k: int = -1
    subgrad_calls: int = 0
    jko_steps: int = 0
    inner_iterations: int = 0
    certified_all: bool = True

    def to_csv(self, path) -> None:
        p = self.phi[0].shape[0] if self.phi else 0
        header = (["k"] + [f"phi_{j}" for j in range(p)] +
                  ["zeta_norm", "H", "certificate", "eps_inner", "step_norm",
                   "surrogate", "certified"])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for idx in range(len(self.k)):
                row = [str(self.k[idx])]
                row += [_FMT.format(v) for v in self.phi[idx]]
                row += [_FMT.format(self.zeta_norm[idx]), _FMT.format(self.H[idx]),
                        _FMT.format(self.certificate[idx]), _FMT.format(self.eps_inner[idx]),
                        _FMT.format(self.step_norm[idx]), _FMT.format(self.surrogate[idx]),
                        "1" if self.certified[idx] else "0"]
                writer.writerow(row)

    def summary_dict(self) -> dict:
        return {
            "best_k": self.best_k,
            "best_moreau_surrogate": self.surrogate[self.best_k] if self.k else None,
            "subgradient_calls": self.subgrad_calls,
            "jko_steps": self.jko_steps,
            "inner_iterations": self.inner_iterations,
            "certified": self.certified_all,
            "eta": self.eta,
            "final_H": self.H[-1] if self.H else None,
        }


@dataclass
class OuterResult:
    phi_best: np.ndarray
    best_k: int
    phi_last: np.ndarray
    final_maps: list
    trace: SolveTrace


def run_outer(spec: ProblemSpec, config: OuterConfig) -> OuterResult:
    """Run exactly K projected-subgradient iterations against inner solves.

    Deterministic for a fixed (spec, config, seed); the trace records one
    row per iteration and the oracle accounting (subgradient calls = K,
    proximal steps summed over inner solves).
    """
    eta = resolve_eta(config, spec)
    constraint = spec.model.constraint
    phi = project(spec.model.phi0, constraint)
    maps = spec.identity_maps()
    trace = SolveTrace(eta=eta)

    for k in range(config.K):
        t0 = time.perf_counter()
        init = maps if config.inner.warm_start else None
        sol = solve_inner(spec, phi, config.inner, init_maps=init)
        maps = sol.maps
        zeta = subgrad_phi(spec, phi, maps)
        phi_next = project(phi - eta * zeta, constraint)
        step_norm = float(np.linalg.norm(phi_next - phi))

        trace.k.append(k)
        trace.phi.append(phi.copy())
        trace.zeta_norm.append(float(np.linalg.norm(zeta)))
        trace.H.append(sol.H)
        trace.certificate.append(sol.certificate)
        trace.eps_inner.append(sol.eps_estimate)
        trace.step_norm.append(step_norm)
        trace.surrogate.append(step_norm / eta)
        trace.certified.append(sol.certified)
        trace.jko_steps_k.append(sol.jko_steps)
        trace.wall.append(time.perf_counter() - t0)
        trace.jko_steps += sol.jko_steps
        trace.inner_iterations += sol.inner_iterations
        trace.certified_all = trace.certified_all and sol.certified

        phi = phi_next

    trace.subgrad_calls = config.K
    trace.best_k = int(np.argmin(trace.surrogate))
    return OuterResult(phi_best=trace.phi[trace.best_k].copy(), best_k=trace.best_k,
                       phi_last=phi, final_maps=maps, trace=trace)
