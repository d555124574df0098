"""Acceptance criteria 1-10, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line, printed in the terminal summary (and
immediately when run with ``-s``).
"""

import math
import os
import time

import numpy as np
import pytest

from arbiter_itc.arbitration import (ArbitrationConfig, arbitrate_ipd, arbitrator_combine, sponsor_run,
                                     sponsor_run_selfservice)
from arbiter_itc.data_model import IpdTrial, summarize_ipd, trial_from_counts
from arbiter_itc.estimators import (anchored_combine, classic_maic, published_effect, weighted_contrast,
                                    weighted_logodds)
from arbiter_itc.propensity import exact_discrete_propensity, fit_logistic, predict, stratum_counts
from arbiter_itc.simharness import paradox_scenario, run_study
from arbiter_itc.weighting import ess, maic_weights, overlap_weights, weighted_covariate_summary, weighted_means

from conftest import ACCEPTANCE_LINES, random_trial


def record(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def omegas(ac, bc):
    exact = exact_discrete_propensity(stratum_counts(ac.covariates, bc.covariates))
    e1 = [float(exact[(x,)].eps) for x in ac.covariates[:, 0]]
    e0 = [float(exact[(x,)].eps) for x in bc.covariates[:, 0]]
    return overlap_weights(e1, "T1"), overlap_weights(e0, "T0")


def test_criterion_01_paradox_pair(example):
    t0 = time.perf_counter()
    a = classic_maic(example["ac_ipd"], example["bc_agd"]).estimate.point
    b = classic_maic(example["bc_ipd"], example["ac_agd"]).estimate.point
    dt = time.perf_counter() - t0
    ok = abs(a - 0.42) <= 0.005 and abs(b - 0.40) <= 0.005 and dt < 1
    record(1, ok, f"A vs B by sponsor A {a:.4f} (0.42), B vs A by sponsor B {b:.4f} (0.40), {dt:.3f}s")


def test_criterion_02_unweighted_effects(example):
    t0 = time.perf_counter()
    vals = [weighted_logodds(t, np.ones(t.n)).point for t in (example["ac_ipd"], example["bc_ipd"])]
    vals += [published_effect(example[k]).point for k in ("ac_agd", "bc_agd")]
    dt = time.perf_counter() - t0
    ok = all(abs(v - 1.12) <= 0.005 for v in vals) and dt < 1
    record(2, ok, f"unweighted logOR AC {vals[0]:.4f}, BC {vals[1]:.4f} (1.12), {dt:.3f}s")


def test_criterion_03_propensities_and_overlap_weights(ac, bc):
    t0 = time.perf_counter()
    exact = exact_discrete_propensity(stratum_counts(ac.covariates, bc.covariates))
    from fractions import Fraction
    exact_ok = exact[(1.0,)].eps == Fraction(1, 3) and exact[(0.0,)].eps == Fraction(2, 3)
    X = np.r_[ac.covariates[:, 0], bc.covariates[:, 0]][:, None]
    m = fit_logistic(X, np.r_[np.ones(ac.n), np.zeros(bc.n)])
    irls = (predict(m, [1.0]), predict(m, [0.0]))
    irls_ok = abs(irls[0] - 1 / 3) <= 1e-8 and abs(irls[1] - 2 / 3) <= 1e-8
    w1, w0 = omegas(ac, bc)
    b1, b0 = ac.covariates[:, 0] == 1, bc.covariates[:, 0] == 1
    w_ok = (np.allclose(w1.weights[b1], 2 / 3, rtol=0, atol=1e-15) and np.allclose(w1.weights[~b1], 1 / 3, rtol=0, atol=1e-15)
            and np.allclose(w0.weights[b0], 1 / 3, rtol=0, atol=1e-15) and np.allclose(w0.weights[~b0], 2 / 3, rtol=0, atol=1e-15))
    dt = time.perf_counter() - t0
    record(3, exact_ok and irls_ok and w_ok and dt < 1,
           f"eps exact {exact[(1.0,)].eps} and {exact[(0.0,)].eps}, IRLS {irls[0]:.10f} and {irls[1]:.10f}, "
           f"omega1 2/3,1/3 omega0 1/3,2/3, {dt:.3f}s")


def test_criterion_04_arbitrated_ato(ac, bc):
    t0 = time.perf_counter()
    w1, w0 = omegas(ac, bc)
    a = weighted_contrast(ac, w1, estimand="ATO")
    b = weighted_contrast(bc, w0, estimand="ATO")
    d = anchored_combine(a, b).point
    dt = time.perf_counter() - t0
    ok = abs(a.point - 1.2993) <= 1e-4 and abs(b.point - 1.2993) <= 1e-4 and abs(d) <= 1e-10 and dt < 1
    record(4, ok, f"ATO logOR AC {a.point:.6f}, BC {b.point:.6f} (1.2993), difference {d:.2e}, {dt:.3f}s")


# overlap population listed for the worked example: 200 subjects per arm and stratum
OVERLAP_COUNTS = {
    "AC": {(1, "A", 0): 180, (1, "A", 1): 20, (1, "C", 0): 80, (1, "C", 1): 120,
           (0, "A", 0): 40, (0, "A", 1): 160, (0, "C", 0): 20, (0, "C", 1): 180},
    "BC": {(1, "B", 0): 120, (1, "B", 1): 80, (1, "C", 0): 80, (1, "C", 1): 120,
           (0, "B", 0): 100, (0, "B", 1): 100, (0, "C", 0): 20, (0, "C", 1): 180},
}


def test_criterion_05_overlap_population_oracle(ac, bc):
    w1, w0 = omegas(ac, bc)
    ok, parts = True, []
    for tid, trial, w in (("AC", ac, w1), ("BC", bc, w0)):
        pop = trial_from_counts(tid, OVERLAP_COUNTS[tid])
        explicit = weighted_logodds(pop, np.ones(pop.n)).point
        weighted = weighted_logodds(trial, w).point
        ok &= abs(explicit - 1.30) <= 0.005 and abs(explicit - weighted) <= 1e-10
        ok &= abs(weighted_covariate_summary(trial, w).covariate_means[0] - 0.5) <= 1e-12
        parts.append(f"{tid} explicit {explicit:.6f} vs weighted {weighted:.6f}")
    record(5, ok, "; ".join(parts) + " (1.30)")


def test_criterion_06_maic_moment_matching():
    worst, cases = 0.0, 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(150, 600))
        X = np.column_stack([rng.normal(0, 1, n), rng.normal(3, 2, n), (rng.random(n) < 0.35).astype(float),
                             (rng.random(n) < 0.55).astype(float), rng.gamma(2.0, 1.0, n)])
        target = X.mean(axis=0) + rng.uniform(-0.2, 0.2, 5) * X.std(axis=0)
        w = maic_weights(X, target)
        worst = max(worst, float(np.max(np.abs(weighted_means(X, w) - target))))
        cases += 1
    record(6, cases == 100 and worst <= 1e-8, f"{cases} random 5-covariate cases, worst sup-norm {worst:.2e}")


def test_criterion_07_weight_scale_invariance(ac, example):
    rng = np.random.default_rng(7)
    trials = [ac] + [random_trial(rng, n=400, p=3) for _ in range(5)]
    worst = 0.0

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-300) if a != b else 0.0

    for t in trials:
        w = maic_weights(t.covariates, t.covariates.mean(axis=0) * 0.9 + 0.05 * t.covariates.std(axis=0)).weights \
            if t is not ac else maic_weights(t.covariates, example["bc_agd"].covariate_means).weights
        base = {
            "logodds": weighted_logodds(t, w).point,
            "ess": ess(w),
            "means": weighted_covariate_summary(t, w).covariate_means.copy(),
            **{f"{s}.{k}": getattr(weighted_contrast(t, w, s), k) for s in ("logOR", "riskdiff") for k in ("point", "se")},
        }
        for c in (1e-6, 1.0, 1e6):
            cw = c * w
            worst = max(worst, rel(weighted_logodds(t, cw).point, base["logodds"]), rel(ess(cw), base["ess"]))
            worst = max(worst, *(rel(a, b) for a, b in zip(weighted_covariate_summary(t, cw).covariate_means, base["means"])))
            for s in ("logOR", "riskdiff"):
                e = weighted_contrast(t, cw, s)
                worst = max(worst, rel(e.point, base[f"{s}.point"]), rel(e.se, base[f"{s}.se"]))
    record(7, worst <= 1e-10, f"{len(trials)} trials x c in (1e-6, 1, 1e6), worst relative change {worst:.2e}")


def _bootstrap_logor_se(X, z, y, target, B, rng):
    """Subject-resampling bootstrap: recompute MAIC weights and the weighted logOR each time."""
    n = len(y)
    out = np.empty(B)
    for b in range(B):
        i = rng.integers(0, n, n)
        w = maic_weights(X[i], target, normalization="raw").weights
        zz, yy = z[i], y[i]
        a1, a0 = np.sum(w * zz * yy), np.sum(w * zz * (1 - yy))
        c1, c0 = np.sum(w * (1 - zz) * yy), np.sum(w * (1 - zz) * (1 - yy))
        out[b] = math.log(a1 * c0 / (a0 * c1))
    return float(out.std(ddof=1))


def test_criterion_08_sandwich_vs_bootstrap(ac, example):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    cases = [(ac, example["bc_agd"].covariate_means)]
    for k in range(10):
        t = random_trial(rng, n=int(rng.integers(500, 1200)), p=3)
        shift = rng.uniform(-0.25, 0.25, 3) * t.covariates.std(axis=0)
        cases.append((t, t.covariates.mean(axis=0) + shift))
    ratios = []
    for t, target in cases:
        w = maic_weights(t.covariates, target)
        se = weighted_contrast(t, w).se
        boot = _bootstrap_logor_se(t.covariates, t.treated, t.event_indicator(), target, 2000, rng)
        ratios.append(se / boot)
    dt = time.perf_counter() - t0
    worst = max(abs(r - 1) for r in ratios)
    record(8, worst <= 0.10 and dt < 120,
           f"sandwich/bootstrap ratios {min(ratios):.3f}..{max(ratios):.3f} over {len(ratios)} cases "
           f"(worked example {ratios[0]:.3f}), {dt:.1f}s")


def test_criterion_09_protocol_equivalence(ac, bc):
    cfg1 = ArbitrationConfig("ipd-shared", ("black",))
    cfg2 = ArbitrationConfig("covariate-simulation", ("black",), seed=42)

    def p1(a, b, cfg):
        pa, pb = arbitrate_ipd(a, b, cfg)
        return arbitrator_combine(sponsor_run(a, pa, cfg), sponsor_run(b, pb, cfg), cfg)

    def p2(a, b, cfg):
        return arbitrator_combine(sponsor_run_selfservice(a, summarize_ipd(b), cfg),
                                  sponsor_run_selfservice(b, summarize_ipd(a), cfg), cfg)

    fixture_gap = abs(p2(ac, bc, cfg2).point - p1(ac, bc, cfg1).point)
    gaps = []
    for seed in range(3):
        rng = np.random.default_rng(500 + seed)
        kinds = ["continuous", "continuous"]
        a = random_trial(rng, "AC", 10_000, 2, kinds=kinds)
        b = random_trial(rng, "BC", 10_000, 2, kinds=kinds, shift=0.4)
        names = a.covariate_names
        gaps.append(abs(p2(a, b, ArbitrationConfig("covariate-simulation", names, seed=1000 + seed)).point
                        - p1(a, b, ArbitrationConfig("ipd-shared", names)).point))
    ok = fixture_gap <= 1e-12 and max(gaps) <= 0.05
    record(9, ok, f"worked example |p2 - p1| {fixture_gap:.1e}; continuous n=1e4 max |p2 - p1| {max(gaps):.4f}")


def test_criterion_10_monte_carlo():
    t0 = time.perf_counter()
    spec = paradox_scenario(replicates=1000, n_per_arm=600)
    r = run_study(spec, threads=os.cpu_count() or 1)
    dt = time.perf_counter() - t0
    p1 = r.methods["arbitrated_ipd"]
    ok = (r.sign_flip_rate >= 0.95 and abs(p1["mean"]) <= 0.02 and 0.93 <= p1["coverage"] <= 0.97
          and not r.failed and dt < 300)
    record(10, ok, f"flip rate {r.sign_flip_rate:.3f}, arbitrated mean {p1['mean']:+.4f}, "
                   f"protocol-1 coverage {p1['coverage']:.3f}, protocol-2 mean "
                   f"{r.methods['arbitrated_simulation']['mean']:+.4f}, aborted {r.aborted}, {dt:.1f}s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
