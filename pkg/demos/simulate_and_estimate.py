"""
Worked example: simulate a panel and recover the parameters.

This script demonstrates:
1. Setting up a three-asset model with a (2, 1) group structure
2. Simulating returns and realized covariance measures
3. Fitting by quasi-maximum likelihood with realized measures
4. Comparing estimates to the truth and reading the diagnostics
"""

import time

import numpy as np

from mrgarch.blocks import BlockPartition
from mrgarch.estimator import EstimationSpec, estimate
from mrgarch.simulate import SimConfig, preset_params, simulate


def print_vector_row(name, true, est):
    t = np.array2string(np.asarray(true, dtype=float), precision=3)
    e = np.array2string(np.asarray(est, dtype=float), precision=3)
    gap = np.abs(np.asarray(true, dtype=float) - np.asarray(est, dtype=float)).max()
    print(f"  {name:<8s} true {t:<24s} est {e:<24s} max gap {gap:.3f}")


def main():
    print("=" * 72)
    print("Simulation and quasi-maximum likelihood recovery")
    print("=" * 72)
    print()

    # ------------------------------------------------------------------
    # STEP 1: a three-asset model with two correlation groups
    # ------------------------------------------------------------------
    print("STEP 1: Model setup")
    print("-" * 72)
    partition = BlockPartition((2, 1))
    truth = preset_params(partition=partition)
    p = truth.loading.partition.p
    print(f"assets: {p}, groups: {partition.sizes}, "
          f"correlation factors: {truth.loading.k}")
    print(f"variance persistence beta + gamma * phi: "
          f"{np.array2string(truth.beta + truth.gamma * truth.phi, precision=3)}")
    print(f"correlation persistence c_beta + c_gamma * c_phi: "
          f"{np.array2string(truth.c_beta + truth.c_gamma * truth.c_phi, precision=3)}")
    print()

    # ------------------------------------------------------------------
    # STEP 2: simulate returns and realized measures
    # ------------------------------------------------------------------
    print("STEP 2: Simulate the panel")
    print("-" * 72)
    t_len = 1500
    data, states = simulate(SimConfig(truth, t_len=t_len, seed=5, burn_in=400))
    print(f"T = {data.T}, dates {data.dates[0]} .. {data.dates[-1]}")
    print(f"daily return std by asset:    "
          f"{np.array2string(data.returns.std(axis=0), precision=3)}")
    print(f"mean realized variance (log): "
          f"{np.array2string(data.log_x.mean(axis=0), precision=3)}")
    avg_corr = np.corrcoef(data.returns.T)
    print("sample return correlation:")
    print(np.array2string(avg_corr, precision=3))
    print()

    # ------------------------------------------------------------------
    # STEP 3: fit the model
    # ------------------------------------------------------------------
    print("STEP 3: Fit by quasi-maximum likelihood")
    print("-" * 72)
    spec = EstimationSpec(structure="block", partition=partition,
                          multistarts=1, seed=0, max_iter=300)
    t0 = time.perf_counter()
    fit = estimate(data, spec)
    elapsed = time.perf_counter() - t0
    print(f"termination: {fit.diagnostics['termination']}, "
          f"iterations: {fit.diagnostics['iterations']}, "
          f"time: {elapsed:.1f}s")
    print(f"log likelihood: {fit.report.total:.2f} "
          f"(return part {fit.report.return_part:.2f}, "
          f"measurement part {fit.report.measurement_part:.2f})")
    print()

    # ------------------------------------------------------------------
    # STEP 4: estimates against the truth
    # ------------------------------------------------------------------
    print("STEP 4: Estimates vs truth")
    print("-" * 72)
    est = fit.params
    print("variance dynamics (one entry per asset):")
    for name in ("omega", "beta", "gamma", "tau1", "tau2"):
        print_vector_row(name, getattr(truth, name), getattr(est, name))
    print("measurement equation (one entry per asset):")
    for name in ("xi", "phi", "delta1", "delta2"):
        print_vector_row(name, getattr(truth, name), getattr(est, name))
    print("correlation dynamics (one entry per factor):")
    for name in ("c_omega", "c_beta", "c_gamma"):
        print_vector_row(name, getattr(truth, name), getattr(est, name))

    persist_true = truth.beta + truth.gamma * truth.phi
    persist_est = est.beta + est.gamma * est.phi
    print()
    print_vector_row("persist", persist_true, persist_est)
    print()
    print("Persistence is pinned down more tightly than beta and gamma")
    print("separately; the two offset each other along the likelihood")
    print("surface, which is the usual pattern at this sample size.")
    print()
    print("done.")


if __name__ == "__main__":
    main()
