#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the three residual-feature kernels at several particle/center counts
(best of `--repeat` runs), then an end-to-end inner solve with a
residual-feature map family once per backend (in subprocesses, because the
backend is fixed at import time).

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 5] [--skip-e2e]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from wass_dro._kernels import impl_py

try:
    from wass_dro._kernels import _speedups
except ImportError:
    _speedups = None

SIZES = [(500, 32), (2000, 64), (8000, 128)]
DIM = 2

_E2E_SNIPPET = r"""
import time
import numpy as np
import wass_dro as wd

cloud = wd.sample(wd.Gaussian(np.zeros(2), np.ones(2)), 2000, 7)
template = wd.ResidualFeatures(cloud.points[:48].copy(), 0.6)
comp = wd.Component(wd.QuadraticTest(alpha=0.5), cloud, wd.W2Sq(), template)
spec = wd.ProblemSpec([comp], wd.LinearModel(2), lam=2.0, rho=0.5, lipschitz=1.0)
cfg = wd.JkoConfig(gamma=0.5, i_max=3, eps_prime=1e-3,
                   inner=wd.InnerOptConfig(step_size=0.5, max_iter=100, grad_tol=1e-9))
t0 = time.perf_counter()
sol = wd.solve_inner(spec, np.zeros(3), cfg)
print(f"{wd.backend_name()}: {time.perf_counter() - t0:.3f}s "
      f"({sol.jko_steps} steps, {sol.inner_iterations} inner iterations)")
"""


def _bench(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    impls = [("python", impl_py)]
    if _speedups is not None:
        impls.append(("cython", _speedups))
    else:
        print("compiled extension not available; benchmarking the fallback only")

    header = f"{'kernel':<16}{'N':>7}{'m':>6}" + "".join(f"{name:>12}" for name, _ in impls)
    if len(impls) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    inv = 1.0 / (2.0 * 0.6 ** 2)
    for n, m in SIZES:
        pts = rng.standard_normal((n, DIM))
        centers = rng.standard_normal((m, DIM))
        coeffs = 0.1 * rng.standard_normal((m, DIM))
        wc = rng.standard_normal((n, DIM)) / n
        cases = [
            ("rbf_weights", "rbf_weights", (pts, centers, inv)),
            ("rbf_apply", "rbf_apply", (pts, centers, inv, coeffs)),
            ("rbf_coeff_grad", "rbf_coeff_grad", (pts, centers, inv, wc)),
        ]
        for label, attr, args in cases:
            times = [_bench(getattr(mod, attr), args, repeat) for _, mod in impls]
            row = f"{label:<16}{n:>7}{m:>6}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
            if len(times) == 2:
                row += f"{times[0] / times[1]:>9.1f}x"
            print(row)


def bench_end_to_end():
    print("\nend-to-end inner solve (residual-feature family, n=2000, m=48):")
    sys.stdout.flush()
    for backend in ("python", "cython"):
        if backend == "cython" and _speedups is None:
            continue
        env = dict(os.environ, WASS_DRO_BACKEND=backend)
        subprocess.run([sys.executable, "-c", _E2E_SNIPPET], env=env, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-e2e", action="store_true")
    args = parser.parse_args()
    bench_kernels(args.repeat)
    if not args.skip_e2e:
        bench_end_to_end()


if __name__ == "__main__":
    main()
