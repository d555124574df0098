"""
The MAIC paradox on the worked example
======================================

Two sponsors each hold individual data for their own trial (A vs C and
B vs C) and only published summaries for the other. Each reweights its own
trial to the other's population, and each concludes its own drug is better.
"""

import numpy as np

from arbiter_itc import classic_maic, load_worked_example, weighted_logodds

fx = load_worked_example()
ac, bc = fx["ac_ipd"], fx["bc_ipd"]

# race is the only covariate; it modifies the treatment effect
print("P(Black) in AC:", ac.covariates[:, 0].mean())
print("P(Black) in BC:", bc.covariates[:, 0].mean())

# unweighted log odds ratios (natural log) agree across the two trials
for t in (ac, bc):
    print(t.trial_id, "unweighted logOR:", round(weighted_logodds(t, np.ones(t.n)).point, 4))

# sponsor A matches AC to the BC race distribution, then subtracts BC's published effect
ra = classic_maic(ac, fx["bc_agd"])
print("sponsor A weights (Black, non-Black):", ra.weights.weights[ac.covariates[:, 0] == 1][0],
      ra.weights.weights[ac.covariates[:, 0] == 0][0])
print("sponsor A: A vs B =", round(ra.estimate.point, 4), " ESS =", round(ra.weights.ess, 1))

# sponsor B does the mirror image
rb = classic_maic(bc, fx["ac_agd"])
print("sponsor B: B vs A =", round(rb.estimate.point, 4))

# both numbers are positive: each sponsor's analysis favours its own drug,
# because each compares the drugs in a different target population
