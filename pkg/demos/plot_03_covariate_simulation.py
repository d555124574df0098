"""
Simulating counterpart covariates from aggregate data
=====================================================

A Gaussian copula with margins set by the published means (and SDs for
continuous covariates). The latent correlation comes from the published
covariance, from the sponsor's own data, or is the identity.
"""

import numpy as np

from arbiter_itc.covgen import build_model, generate, tetrachoric
from arbiter_itc.data_model import AgdSummary, make_specs

specs = make_specs(["female", "smoker", "age"], ["binary", "binary", "continuous"])
cov = np.array([[0.24, 0.03, 0.5],
                [0.03, 0.21, -0.4],
                [0.5, -0.4, 81.0]])
agd = AgdSummary("BC", ("B", "C"), {"B": 250, "C": 250}, specs, [0.4, 0.3, 62.0], cov)

model = build_model(agd, seed=20240601)
print("latent correlation:\n", model.latent_correlation.round(4))

# the same (model, n) always gives the same matrix, on any machine
X = generate(model, 100_000)
assert np.array_equal(X[:10], generate(model, 100_000)[:10])
print("sample means:", X.mean(axis=0).round(3))
print("sample covariance:\n", np.cov(X, rowvar=False).round(3))

# the tetrachoric step: latent correlation giving two binaries a phi of 0.1
print("tetrachoric(0.4, 0.3, phi=0.1) =", round(tetrachoric(0.4, 0.3, 0.1), 4))

# exact-count margins: every binary column carries round(n * p) ones
exact = build_model(agd, seed=1, binary_margin="exact-count")
print("ones in a 500-row draw:", generate(exact, 500)[:, :2].sum(axis=0))
