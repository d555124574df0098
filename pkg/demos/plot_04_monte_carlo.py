"""
Monte Carlo study of the four analyses
======================================

Trials are redrawn from the worked example's cell probabilities. Each
replicate runs both sponsors' classic MAIC and both arbitration protocols;
true effects come from exact enumeration over covariate patterns.
"""

import os

from arbiter_itc.simharness import paradox_scenario, run_study

spec = paradox_scenario(replicates=200)
report = run_study(spec, threads=os.cpu_count() or 1)
print(report.to_text())

# classic MAIC targets differ by sponsor, so the two sponsor means sit on
# opposite sides of zero; both arbitrated estimators centre on the ATO truth
# (zero here) and their intervals cover it about 95% of the time
