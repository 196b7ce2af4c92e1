"""Experiment runner CLI.

    wass-dro <run|diagnose|sweep|oracle> --config <path> [--output <dir>]
             [--jobs N] [--seed S]

Configs are JSON with an explicit ``schema_version``; all outputs
(trace.csv, summary.json, probes.json, sweep_summary.csv, ...) are
deterministic functions of (config, seed). Logging verbosity comes from
the WASS_DRO_LOG environment variable (error|info|debug).

Exit codes: 0 success, 1 configuration/usage error, 2 run finished in an
uncertified terminal state, 3 some diagnostic probe failed, 4 some probe
was inconclusive.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import backend_name
from .diagnostics import (ProbeReport, agg_convexity_probe, analytic_quadratic_optimum,
                          contraction_fit, danskin_check, gradient_mapping_norm,
                          moreau_grad, sample_in_constraint, solution_lipschitz_probe,
                          weak_convexity_probe)
from .errors import OracleLimitError, WassDroError
from .jko import InnerOptConfig, JkoConfig, resolve_gamma, solve_inner
from .measures import (GENERATOR_NAME, Empirical, Gaussian, GaussianMixture,
                       ParticleCloud, UniformBox, load_csv, make_rng, sample)
from .objective import (Component, Exponential, KlGaussAffine, Logistic, ProblemSpec,
                        QuadraticPhi, QuadraticTest, SquaredHinge, W2Sq, model_from_dict)
from .solver import OuterConfig, run_outer
from .transport import Affine, Identity, ResidualFeatures, exact_w2_empirical

SCHEMA_VERSION = 1
_BRANCH_SEED_STRIDE = 100003

log = logging.getLogger("wass_dro")


class ConfigError(WassDroError, ValueError):
    """Schema violation; message names the offending field."""


def _require(cfg: dict, field: str, where: str):
    if field not in cfg:
        raise ConfigError(f"{where}: missing required field '{field}'")
    return cfg[field]


def build_reference(cfg: dict, where: str):
    kind = _require(cfg, "kind", where)
    if kind == "gaussian":
        return Gaussian(np.asarray(_require(cfg, "mean", where), dtype=float),
                        np.asarray(_require(cfg, "cov_diag", where), dtype=float))
    if kind == "gaussian_mixture":
        return GaussianMixture(np.asarray(_require(cfg, "weights", where), dtype=float),
                               np.asarray(_require(cfg, "means", where), dtype=float),
                               np.asarray(_require(cfg, "cov_diags", where), dtype=float))
    if kind == "uniform_box":
        return UniformBox(np.asarray(_require(cfg, "lo", where), dtype=float),
                          np.asarray(_require(cfg, "hi", where), dtype=float))
    if kind == "empirical":
        return Empirical(str(_require(cfg, "path", where)))
    raise ConfigError(f"{where}.kind: unknown reference kind {kind!r}")


def build_loss(cfg: dict, where: str):
    kind = _require(cfg, "kind", where)
    if kind in ("exponential", "logistic", "squared_hinge"):
        sign = cfg.get("sign", 1)
        cls = {"exponential": Exponential, "logistic": Logistic,
               "squared_hinge": SquaredHinge}[kind]
        return cls(sign=None if sign is None else int(sign))
    if kind == "quadratic_test":
        return QuadraticTest(alpha=float(_require(cfg, "alpha", where)))
    if kind == "quadratic_phi":
        return QuadraticPhi(beta=float(_require(cfg, "beta", where)))
    raise ConfigError(f"{where}.kind: unknown loss kind {kind!r}")


def build_discrepancy(cfg: dict, ref, where: str):
    kind = _require(cfg, "kind", where)
    if kind == "w2sq":
        return W2Sq()
    if kind == "kl_gauss_affine":
        if "mean" in cfg and "cov_diag" in cfg:
            return KlGaussAffine(np.asarray(cfg["mean"], dtype=float),
                                 np.asarray(cfg["cov_diag"], dtype=float))
        if isinstance(ref, Gaussian):
            return KlGaussAffine(ref.mean, ref.cov_diag)
        raise ConfigError(f"{where}: kl_gauss_affine needs a Gaussian reference "
                          "or explicit mean/cov_diag")
    raise ConfigError(f"{where}.kind: unknown discrepancy kind {kind!r}")


def build_map_template(cfg: dict, cloud: ParticleCloud, where: str):
    family = _require(cfg, "family", where)
    if family == "identity":
        return Identity(cloud.dim)
    if family == "affine":
        template = Affine.identity(cloud.dim)
        if "params" in cfg:
            template = template.with_params(np.asarray(cfg["params"], dtype=float))
        return template
    if family == "residual_features":
        if "centers" in cfg:
            centers = np.asarray(cfg["centers"], dtype=float)
        elif "centers_from_reference" in cfg:
            m = int(cfg["centers_from_reference"])
            if m < 1 or m > cloud.n:
                raise ConfigError(f"{where}.centers_from_reference: need 1 <= m <= {cloud.n}")
            centers = cloud.points[:m]
        else:
            raise ConfigError(f"{where}: residual_features needs 'centers' or "
                              "'centers_from_reference'")
        template = ResidualFeatures(centers, float(_require(cfg, "bandwidth", where)))
        if "params" in cfg:
            template = template.with_params(np.asarray(cfg["params"], dtype=float))
        return template
    raise ConfigError(f"{where}.family: unknown map family {family!r}")


def build_component(cfg: dict, seed: int, index: int) -> Component:
    where = f"problem.components[{index}]"
    ref = build_reference(_require(cfg, "reference", where), f"{where}.reference")
    comp_seed = int(cfg.get("seed", seed + index))
    if "n_particles" in cfg:
        cloud = sample(ref, int(cfg["n_particles"]), comp_seed)
    elif isinstance(ref, Empirical):
        cloud = load_csv(ref.path)
    else:
        raise ConfigError(f"{where}: synthetic references need 'n_particles'")
    loss = build_loss(_require(cfg, "loss", where), f"{where}.loss")
    disc = build_discrepancy(_require(cfg, "discrepancy", where), ref, f"{where}.discrepancy")
    map_template = build_map_template(_require(cfg, "map", where), cloud, f"{where}.map")
    return Component(loss=loss, reference=cloud, discrepancy=disc, map_template=map_template)


def build_problem(cfg: dict, seed: int) -> ProblemSpec:
    problem = _require(cfg, "problem", "config")
    model = model_from_dict(_require(cfg, "model", "config"))
    comps = _require(problem, "components", "problem")
    if not isinstance(comps, list) or not comps:
        raise ConfigError("problem.components: need a non-empty list")
    components = [build_component(c, seed, i) for i, c in enumerate(comps)]
    return ProblemSpec(components=components, model=model,
                       lam=float(_require(problem, "lambda", "problem")),
                       rho=float(problem.get("rho", 0.0)),
                       lipschitz=float(problem.get("lipschitz", 1.0)))


def build_inner(cfg: dict) -> JkoConfig:
    opt = InnerOptConfig(optimizer=cfg.get("optimizer", "gd"),
                         step_size=float(cfg.get("step_size", 0.1)),
                         max_iter=int(cfg.get("max_inner_iter", 5000)),
                         grad_tol=float(cfg.get("grad_tol", 0.0)),
                         momentum=float(cfg.get("momentum", 0.9)))
    gamma = cfg.get("gamma")
    return JkoConfig(gamma=None if gamma is None else float(gamma),
                     i_max=int(cfg.get("i_max", 50)),
                     eps_prime=float(cfg.get("eps_prime", 1e-6)),
                     inner=opt,
                     warm_start=bool(cfg.get("warm_start", True)))


def build_outer(cfg: dict, inner: JkoConfig, seed: int) -> OuterConfig:
    eta = cfg.get("eta", "auto")
    return OuterConfig(K=int(_require(cfg, "K", "outer")),
                       eta=eta if isinstance(eta, str) else float(eta),
                       smooth_mode=bool(cfg.get("smooth_mode", False)),
                       inner=inner, seed=seed)


def _provenance(seed: int) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "rng": GENERATOR_NAME,
        "build_id": f"wass-dro-{__version__}",
        "kernel_backend": backend_name(),
        "seed": seed,
    }


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    version = _require(cfg, "schema_version", "config")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config.schema_version: expected {SCHEMA_VERSION}, got {version}")
    return cfg


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def cmd_run(cfg: dict, output_dir: Path) -> int:
    seed = int(cfg.get("seed", 0))
    spec = build_problem(cfg, seed)
    inner = build_inner(cfg.get("inner", {}))
    outer = build_outer(_require(cfg, "outer", "config"), inner, seed)
    output_dir.mkdir(parents=True, exist_ok=True)

    result = run_outer(spec, outer)
    result.trace.to_csv(output_dir / "trace.csv")

    summary = result.trace.summary_dict()
    summary.update(_provenance(seed))
    _write_json(output_dir / "summary.json", summary)

    model_payload = spec.model.to_dict()
    model_payload.update({"phi_best": result.phi_best.tolist(),
                          "phi_last": result.phi_last.tolist(),
                          "best_k": result.best_k})
    _write_json(output_dir / "final_model.json", model_payload)
    _write_json(output_dir / "final_maps.json", [m.to_dict() for m in result.final_maps])

    log.info("run finished: best_k=%d certified=%s", result.best_k,
             result.trace.certified_all)
    return 0 if result.trace.certified_all else 2


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def _probe_entry(entry):
    if isinstance(entry, str):
        return entry, {}
    if isinstance(entry, dict) and "name" in entry:
        params = {k: v for k, v in entry.items() if k != "name"}
        return entry["name"], params
    raise ConfigError(f"probes: malformed entry {entry!r}")


def _run_probe(name: str, params: dict, spec: ProblemSpec, inner: JkoConfig,
               seed: int) -> ProbeReport:
    if name == "weak_convexity":
        return weak_convexity_probe(spec, n_triples=int(params.get("n", 200)),
                                    seed=int(params.get("seed", seed)),
                                    inner=inner, scale=float(params.get("scale", 1.0)))
    if name == "agg_convexity":
        worst = None
        for comp in spec.components:
            rep = agg_convexity_probe(comp.discrepancy, comp.reference, comp.map_template,
                                      spec.lam, n_curves=int(params.get("n", 100)),
                                      seed=int(params.get("seed", seed)),
                                      spread=float(params.get("spread", 0.3)),
                                      tolerance=float(params.get("tolerance", 1e-8)))
            if worst is None:
                worst = rep
            else:
                worst = ProbeReport(name="agg_convexity",
                                    samples=worst.samples + rep.samples,
                                    violations=worst.violations + rep.violations,
                                    worst_margin=max(worst.worst_margin, rep.worst_margin),
                                    tolerance=max(worst.tolerance, rep.tolerance),
                                    passed=worst.passed and rep.passed)
        return worst
    if name == "danskin":
        n_points = int(params.get("n", 10))
        h = float(params.get("h", 1e-4))
        tol = float(params.get("tol", 1e-3))
        rng = make_rng(int(params.get("seed", seed)))
        errs = []
        for _ in range(n_points):
            phi = sample_in_constraint(spec.model.constraint, spec.model.n_params, rng,
                                       float(params.get("scale", 1.0)))
            errs.append(danskin_check(spec, phi, h=h, inner=inner))
        worst = max(errs)
        return ProbeReport(name="danskin", samples=n_points,
                           violations=sum(e > tol for e in errs), worst_margin=worst,
                           tolerance=tol, passed=worst <= tol)
    if name == "contraction":
        opt = analytic_quadratic_optimum(spec)
        if opt is None:
            return ProbeReport(name="contraction", samples=0, violations=0,
                               worst_margin=float("nan"), tolerance=float("nan"),
                               passed=False, inconclusive=True,
                               notes="no analytic optimum for this problem")
        phi = spec.model.phi0
        sol = solve_inner(spec, phi, inner, opt_maps=opt)
        fit = contraction_fit(sol.trace, spec.kappa, resolve_gamma(inner, spec),
                              slack=float(params.get("slack", 1.05)))
        notes = (f"empirical_rate={fit.empirical_rate}, bound_rate={fit.bound_rate:.6g}, "
                 f"floor_dominated={fit.floor_dominated}")
        return ProbeReport(name="contraction", samples=len(sol.trace.i), violations=0,
                           worst_margin=fit.worst_ratio - 1.0, tolerance=0.05,
                           passed=fit.passed, inconclusive=False, notes=notes)
    if name == "solution_lipschitz":
        return solution_lipschitz_probe(spec, n_pairs=int(params.get("n", 50)),
                                        seed=int(params.get("seed", seed)),
                                        perturbation=float(params.get("perturbation", 0.1)),
                                        inner=inner, scale=float(params.get("scale", 1.0)))
    if name == "gradient_mapping":
        eta = float(params.get("eta", 0.1))
        val = gradient_mapping_norm(spec, spec.model.phi0, eta, inner=inner)
        return ProbeReport(name="gradient_mapping", samples=1, violations=0,
                           worst_margin=val, tolerance=float("inf"), passed=True,
                           notes=f"surrogate={val:.6g} at phi0, eta={eta:g}")
    if name == "moreau":
        res = moreau_grad(spec, spec.model.phi0, r=params.get("r"),
                          tol=float(params.get("tol", 1e-6)), inner=inner)
        return ProbeReport(name="moreau", samples=1, violations=0,
                           worst_margin=float(np.linalg.norm(res.gradient)),
                           tolerance=res.error_bound, passed=True,
                           notes=f"envelope gradient norm at phi0 "
                                 f"(+- {res.error_bound:.3g})")
    raise ConfigError(f"probes: unknown probe name {name!r}")


def cmd_diagnose(cfg: dict, output_dir: Path) -> int:
    seed = int(cfg.get("seed", 0))
    spec = build_problem(cfg, seed)
    inner = build_inner(cfg.get("inner", {}))
    entries = cfg.get("probes", [])
    parsed = [_probe_entry(e) for e in entries]

    output_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for name, params in parsed:
        log.info("running probe %s", name)
        reports.append(_run_probe(name, params, spec, inner, seed))

    payload = {"probes": [r.to_dict() for r in reports]}
    payload.update(_provenance(seed))
    _write_json(output_dir / "probes.json", payload)

    if any((not r.passed) and (not r.inconclusive) for r in reports):
        return 3
    if any(r.inconclusive for r in reports):
        return 4
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

_SWEEP_PARAMS = ("outer.K", "problem.lambda", "inner.gamma")


def _set_config_path(cfg: dict, dotted: str, value):
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def _branch_label(dotted: str, value) -> str:
    leaf = dotted.split(".")[-1]
    return f"{leaf}_{value:g}"


def _run_sweep_branch(branch_cfg: dict, branch_dir: str) -> dict:
    """Top-level so it can cross a process boundary."""
    branch_path = Path(branch_dir)
    code = cmd_run(branch_cfg, branch_path)
    with open(branch_path / "summary.json") as fh:
        summary = json.load(fh)
    # Contraction fit on testbeds with an analytic worst case.
    rate = ""
    bound_rate = ""
    seed = int(branch_cfg.get("seed", 0))
    spec = build_problem(branch_cfg, seed)
    opt = analytic_quadratic_optimum(spec)
    if opt is not None:
        inner = build_inner(branch_cfg.get("inner", {}))
        sol = solve_inner(spec, spec.model.phi0, inner, opt_maps=opt)
        fit = contraction_fit(sol.trace, spec.kappa, resolve_gamma(inner, spec))
        if fit.empirical_rate is not None:
            rate = f"{fit.empirical_rate:.17g}"
        bound_rate = f"{fit.bound_rate:.17g}"
    summary["_exit_code"] = code
    summary["_contraction_rate"] = rate
    summary["_contraction_bound_rate"] = bound_rate
    return summary


def cmd_sweep(cfg: dict, output_dir: Path, jobs: int = 1) -> int:
    seed = int(cfg.get("seed", 0))
    sweep = _require(cfg, "sweep", "config")
    dotted = _require(sweep, "parameter", "sweep")
    if dotted not in _SWEEP_PARAMS:
        raise ConfigError(f"sweep.parameter must be one of {_SWEEP_PARAMS}, got {dotted!r}")
    values = _require(sweep, "values", "sweep")
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values: need a non-empty list")
    for v in values:
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(f"sweep.values: non-numeric value {v!r}")

    output_dir.mkdir(parents=True, exist_ok=True)
    branches = []
    for idx, value in enumerate(values):
        branch_cfg = copy.deepcopy(cfg)
        branch_cfg.pop("sweep", None)
        branch_cfg["mode"] = "run"
        if dotted == "outer.K":
            _set_config_path(branch_cfg, dotted, int(value))
        else:
            _set_config_path(branch_cfg, dotted, float(value))
        branch_cfg["seed"] = seed + _BRANCH_SEED_STRIDE * idx
        branch_dir = output_dir / _branch_label(dotted, value)
        branches.append((value, branch_cfg, str(branch_dir)))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run_sweep_branch,
                                      [b[1] for b in branches],
                                      [b[2] for b in branches]))
    else:
        summaries = [_run_sweep_branch(b[1], b[2]) for b in branches]

    import csv as _csv
    worst = 0
    with open(output_dir / "sweep_summary.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["parameter", "value", "seed", "best_k", "best_moreau_surrogate",
                         "subgradient_calls", "jko_steps", "certified", "final_H",
                         "contraction_rate", "contraction_bound_rate"])
        for (value, branch_cfg, _), summary in zip(branches, summaries):
            writer.writerow([
                dotted, f"{value:g}", branch_cfg["seed"], summary["best_k"],
                f"{summary['best_moreau_surrogate']:.17g}",
                summary["subgradient_calls"], summary["jko_steps"],
                "1" if summary["certified"] else "0",
                f"{summary['final_H']:.17g}",
                summary["_contraction_rate"], summary["_contraction_bound_rate"],
            ])
            worst = max(worst, summary["_exit_code"])
    return worst


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def cmd_oracle(cfg: dict) -> int:
    oracle = _require(cfg, "oracle", "config")
    a = load_csv(_require(oracle, "a", "oracle"))
    b = load_csv(_require(oracle, "b", "oracle"))
    value = exact_w2_empirical(a, b)
    print(f"{value:.12f}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _setup_logging() -> None:
    level = os.environ.get("WASS_DRO_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        print(f"warning: WASS_DRO_LOG must be error|info|debug, got {level!r}",
              file=sys.stderr)
        level = "error"
    logging.basicConfig(level=levels[level], format="%(name)s %(levelname)s %(message)s")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wass-dro",
                                     description="particle DRO solver and diagnostics")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in ("run", "diagnose", "sweep", "oracle"):
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True)
        p.add_argument("--output", default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)

    args = parser.parse_args(argv)
    _setup_logging()

    try:
        cfg = load_config(args.config)
        if "mode" in cfg and cfg["mode"] != args.mode:
            raise ConfigError(f"config.mode is {cfg['mode']!r} but the "
                              f"{args.mode!r} subcommand was invoked")
        if args.seed is not None:
            cfg["seed"] = args.seed
        output_dir = Path(args.output if args.output is not None
                          else cfg.get("output_dir", "wass_dro_out"))
        if args.mode == "run":
            return cmd_run(cfg, output_dir)
        if args.mode == "diagnose":
            return cmd_diagnose(cfg, output_dir)
        if args.mode == "sweep":
            return cmd_sweep(cfg, output_dir, jobs=max(1, args.jobs))
        if args.mode == "oracle":
            return cmd_oracle(cfg)
        raise ConfigError(f"unknown mode {args.mode!r}")
    except OracleLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except WassDroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
