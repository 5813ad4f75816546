"""Compare the jitted and pure-numpy mixture kernels.

The kernel module picks its path at import from REWARDLANGEVIN_NUMBA, so this
script re-runs itself in a subprocess for each path and reports per-call
timings for the three hot operations plus a full sampling run.

Usage: python benchmarks/bench_kernels.py [--reps 20000]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def bench_one_path(reps):
    from rewardlangevin import kernels
    from rewardlangevin.config import load_config
    import rewardlangevin.sampler as smp

    rng = np.random.default_rng(0)
    C, D = 3, 2
    means = rng.standard_normal((C, D))
    variances = 0.3 + rng.random((C, D))
    logw = np.log(np.full(C, 1.0 / C))
    z = rng.standard_normal(D)
    cot = rng.standard_normal(D)
    alpha, sigma = 0.55, 0.45

    results = {"numba": kernels.USING_NUMBA}
    ops = {
        "logq_score": lambda: kernels.gmm_logq_score(
            z, means, variances, logw, alpha, sigma),
        "denoise": lambda: kernels.gmm_denoise(
            z, means, variances, logw, alpha, sigma),
        "denoiser_vjp": lambda: kernels.gmm_denoiser_vjp(
            z, means, variances, logw, alpha, sigma, cot),
    }
    for name, fn in ops.items():
        fn()   # warm-up / jit compile
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        results[name + "_us"] = 1e6 * (time.perf_counter() - t0) / reps

    cfg = load_config(None, [], 0)
    built = cfg.build()
    smp.run(*built)   # warm-up
    t0 = time.perf_counter()
    for seed in range(5):
        cfg = load_config(None, [], seed)
        smp.run(*cfg.build())
    results["full_run_ms"] = 1e3 * (time.perf_counter() - t0) / 5
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20000)
    ap.add_argument("--single", action="store_true",
                    help="benchmark only the currently selected path")
    args = ap.parse_args()

    if args.single:
        print(json.dumps(bench_one_path(args.reps)))
        return

    rows = []
    for flag in ("1", "0"):
        env = dict(os.environ, REWARDLANGEVIN_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--single",
             "--reps", str(args.reps)],
            env=env, capture_output=True, text=True, check=True)
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))

    header = f"{'metric':<18}{'numba':>12}{'numpy':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    jit, plain = rows
    for key in ("logq_score_us", "denoise_us", "denoiser_vjp_us",
                "full_run_ms"):
        ratio = plain[key] / jit[key] if jit[key] else float("nan")
        print(f"{key:<18}{jit[key]:>12.3f}{plain[key]:>12.3f}{ratio:>10.2f}x")


if __name__ == "__main__":
    main()
