import numpy as np
import pytest

from arbiter_itc.data_model import load_worked_example, make_specs, summarize_ipd, IpdTrial


@pytest.fixture(scope="session")
def example():
    return load_worked_example()


@pytest.fixture(scope="session")
def ac(example):
    return example["ac_ipd"]


@pytest.fixture(scope="session")
def bc(example):
    return example["bc_ipd"]


def random_trial(rng, trial_id="AC", n=400, p=2, kinds=None, shift=0.0):
    """Small random binary-outcome trial with mixed covariates."""
    kinds = kinds or ["binary"] + ["continuous"] * (p - 1)
    X = np.column_stack([
        (rng.random(n) < 0.4 + shift).astype(float) if k == "binary" else rng.normal(shift, 1.0, n)
        for k in kinds
    ])
    z = np.r_[np.ones(n // 2), np.zeros(n - n // 2)]
    eta = -0.3 + X @ np.linspace(0.5, -0.4, p) + z * (0.8 + 0.4 * X[:, 0])
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    active = "A" if trial_id == "AC" else "B"
    return IpdTrial(
        trial_id=trial_id,
        subject_ids=[f"{trial_id}-{i}" for i in range(n)],
        arms=np.where(z == 1, active, "C"),
        outcomes=y,
        covariates=X,
        covariate_specs=make_specs([f"x{j}" for j in range(p)], kinds),
    )


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
