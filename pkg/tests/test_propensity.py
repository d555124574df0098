import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arbiter_itc.errors import PositivityWarning, SeparationError
from arbiter_itc.propensity import (PropensityModel, exact_discrete_propensity, fit_logistic, log_likelihood,
                                    predict, score, stratum_counts)


def pooled_race():
    x = np.r_[np.ones(400), np.zeros(800), np.ones(800), np.zeros(400)]
    t = np.r_[np.ones(1200), np.zeros(1200)]
    return x[:, None], t


def test_pooled_worked_example_fit():
    X, t = pooled_race()
    m = fit_logistic(X, t, names=["black"])
    assert m.converged
    assert predict(m, [1.0]) == pytest.approx(1 / 3, abs=1e-8)
    assert predict(m, [0.0]) == pytest.approx(2 / 3, abs=1e-8)


def test_intercept_only_matches_sample_proportion():
    t = np.r_[np.ones(37), np.zeros(63)]
    m = fit_logistic(np.empty((100, 0)), t)
    assert predict(m, np.empty(0)) == pytest.approx(0.37, abs=1e-10)


@pytest.mark.parametrize("labels", [np.ones(10), np.zeros(10)])
def test_one_class_labels_raise(labels):
    with pytest.raises(ValueError):
        fit_logistic(np.arange(10.0)[:, None], labels)


def test_separation_detected():
    x = np.r_[np.zeros(20), np.ones(20)]
    with pytest.raises(SeparationError):
        fit_logistic(x[:, None], x)


def test_predict_zero_coefficients_and_dimension_check():
    m = PropensityModel(np.zeros(3), ("a", "b"))
    assert predict(m, [4.0, -7.0]) == 0.5
    with pytest.raises(ValueError):
        predict(m, [1.0])


def test_predict_stays_inside_unit_interval():
    m = PropensityModel(np.array([0.0, 1.0]), ("a",))
    eps = predict(m, np.array([[-1e4], [1e4]]))
    assert np.all((eps > 0) & (eps < 1))


def test_exact_discrete_examples():
    r = exact_discrete_propensity({"black": (400, 800), "non": (800, 400), "eq": (7, 7)})
    assert r["black"].eps == Fraction(1, 3)
    assert r["non"].eps == Fraction(2, 3)
    assert r["eq"].eps == Fraction(1, 2)
    with pytest.warns(PositivityWarning):
        r = exact_discrete_propensity({"s": (0, 50)})
    assert r["s"].eps == 0 and r["s"].positivity_warning


def test_stratum_counts_worked_example(ac, bc):
    c = stratum_counts(ac.covariates, bc.covariates)
    assert c == {(0.0,): (800, 400), (1.0,): (400, 800)}


def _random_design(seed, n=300, p=3):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.normal(0, 1, n), (rng.random(n) < 0.5).astype(float), rng.normal(5, 3, n)])[:, :p]
    eta = 0.2 + X @ np.array([0.7, -0.5, 0.1])[:p] - 0.5
    t = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    return X, t


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_label_swap_symmetry(seed):
    X, t = _random_design(seed)
    m1 = fit_logistic(X, t)
    m0 = fit_logistic(X, 1 - t)
    assert np.allclose(m1.coefficients, -m0.coefficients, atol=1e-7)
    assert np.allclose(predict(m1, X), 1 - predict(m0, X), atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 500), st.integers(1, 500))
def test_label_swap_exact_discrete(n1, n0):
    a = exact_discrete_propensity({"s": (n1, n0)})["s"].eps
    b = exact_discrete_propensity({"s": (n0, n1)})["s"].eps
    assert a == 1 - b


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.integers(1, 60), st.integers(1, 60))
def test_single_binary_irls_matches_exact(a1, a0, b1, b0):
    x = np.r_[np.ones(a1), np.zeros(b1), np.ones(a0), np.zeros(b0)]
    t = np.r_[np.ones(a1 + b1), np.zeros(a0 + b0)]
    exact = exact_discrete_propensity(stratum_counts(x[t == 1, None], x[t == 0, None]))
    try:
        m = fit_logistic(x[:, None], t)
    except SeparationError:
        return
    for key, s in exact.items():
        assert predict(m, list(key)) == pytest.approx(float(s.eps), abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_check(seed):
    X, t = _random_design(seed)
    m = fit_logistic(X, t)
    # the score vanishes at the MLE, so compare away from it as well
    rng = np.random.default_rng(seed)
    for beta in (m.coefficients, m.coefficients + rng.normal(0, 0.3, m.coefficients.size)):
        g = score(beta, X, t)
        h = 1e-5
        fd = np.array([(log_likelihood(beta + h * e, X, t) - log_likelihood(beta - h * e, X, t)) / (2 * h)
                       for e in np.eye(beta.size)])
        if beta is m.coefficients:
            assert np.max(np.abs(g)) <= 1e-6
            assert np.max(np.abs(fd)) <= 1e-4
        else:
            assert np.allclose(g, fd, rtol=1e-5, atol=1e-6 * np.max(np.abs(g)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.floats(-100, 100))
def test_affine_invariance(seed, a, b):
    X, t = _random_design(seed)
    Y = X.copy()
    Y[:, 0] = a * X[:, 0] + b
    Y[:, 2] = -a * X[:, 2] + 3 * b
    e1 = predict(fit_logistic(X, t), X)
    e2 = predict(fit_logistic(Y, t), Y)
    assert np.allclose(e1, e2, atol=1e-8)


def test_model_round_trip():
    X, t = _random_design(1)
    m = fit_logistic(X, t, names=["a", "b", "c"])
    m2 = PropensityModel.from_dict(m.to_dict())
    assert np.array_equal(m2.coefficients, m.coefficients) and m2.covariates == ("a", "b", "c")
