"""
Arbitrated comparison in the overlap population
===============================================

A neutral arbitrator fixes one target population for both sponsors: the
overlap population, tilted by eps(x)(1 - eps(x)) where eps is the
probability of belonging to the AC trial. Two protocols are shown.
"""

import numpy as np

from arbiter_itc import (ArbitrationConfig, arbitrate_ipd, arbitrator_combine, load_worked_example,
                         sponsor_run, sponsor_run_selfservice, summarize_ipd)
from arbiter_itc.propensity import exact_discrete_propensity, stratum_counts

fx = load_worked_example()
ac, bc = fx["ac_ipd"], fx["bc_ipd"]

# exact trial-membership propensities per race stratum (rational arithmetic)
for key, s in exact_discrete_propensity(stratum_counts(ac.covariates, bc.covariates)).items():
    print("Black" if key == (1.0,) else "non-Black", "eps =", s.eps)

# Protocol 1: the arbitrator sees both trials' covariates, fits the
# propensity model and sends each sponsor its overlap weights
cfg = ArbitrationConfig("ipd-shared", ("black",))
pkg_a, pkg_b = arbitrate_ipd(ac, bc, cfg)
print("omega1 for AC (Black, non-Black):", np.unique(pkg_a.weights.weights.round(12))[::-1])
res_a, res_b = sponsor_run(ac, pkg_a, cfg), sponsor_run(bc, pkg_b, cfg)
print("sponsor A, ATO logOR A vs C:", round(res_a.estimate.point, 4))
print("sponsor B, ATO logOR B vs C:", round(res_b.estimate.point, 4))
est = arbitrator_combine(res_a, res_b, cfg)
print("arbitrated A vs B:", round(est.point, 4) + 0.0, "SE", round(est.se, 4))

# Protocol 2: no covariate data leaves a sponsor. Each one simulates the
# counterpart's covariates from its published summary with the shared seed,
# fits the agreed propensity model and analyses its own trial.
cfg2 = ArbitrationConfig("covariate-simulation", ("black",), seed=42)
r2a = sponsor_run_selfservice(ac, summarize_ipd(bc), cfg2)
r2b = sponsor_run_selfservice(bc, summarize_ipd(ac), cfg2)
est2 = arbitrator_combine(r2a, r2b, cfg2)
print("protocol 2 arbitrated A vs B:", round(est2.point, 4) + 0.0)
print("config hash shared by both packages:", r2a.config_hash[:16], "...")
