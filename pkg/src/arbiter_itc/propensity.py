"""Trial-membership propensity scores.

``eps(x) = P(T=1 | X=x)`` where T=1 marks the AC trial. Two routes are
provided: a logistic regression fitted by iteratively reweighted least squares
on pooled covariates, and the exact per-stratum proportion for discrete
covariates, which is what the Bayes formula reduces to.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConvergenceWarning, PositivityWarning, SeparationError

SCORE_TOL = 1e-8
MAX_ITER = 100
SEPARATION_THRESHOLD = 30.0

_P_LO = np.finfo(float).tiny
_P_HI = 1.0 - np.finfo(float).epsneg


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """Fitted logistic propensity model.

    ``coefficients[0]`` is the intercept, the rest are slopes on the original
    (unstandardized) covariate scale, in the order of ``covariates``.
    """

    coefficients: np.ndarray
    covariates: tuple = ()
    link: str = "logit"
    iterations: int = 0
    converged: bool = True
    max_score: float = 0.0

    @property
    def p(self) -> int:
        return len(self.coefficients) - 1

    def to_dict(self) -> dict:
        return {
            "covariates": list(self.covariates),
            "coefficients": [float(c) for c in self.coefficients],
            "link": self.link,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "max_score": float(self.max_score),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PropensityModel:
        return cls(
            coefficients=np.asarray(d["coefficients"], dtype=float),
            covariates=tuple(d["covariates"]),
            link=d["link"],
            iterations=d["iterations"],
            converged=d["converged"],
            max_score=d["max_score"],
        )


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def log_likelihood(coefficients, X, labels) -> float:
    """Binomial log-likelihood of a logistic model (intercept first)."""
    eta = _design(np.asarray(X, float).reshape(len(labels), -1)) @ np.asarray(coefficients, float)
    y = np.asarray(labels, float)
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def score(coefficients, X, labels) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood`."""
    D = _design(np.asarray(X, float).reshape(len(labels), -1))
    return D.T @ (np.asarray(labels, float) - expit(D @ np.asarray(coefficients, float)))


def fit_logistic(
    covariates,
    labels,
    names: Sequence[str] | None = None,
    tol: float = SCORE_TOL,
    max_iter: int = MAX_ITER,
    separation_threshold: float = SEPARATION_THRESHOLD,
) -> PropensityModel:
    """Maximum-likelihood logistic regression by IRLS with step-halving.

    Non-binary columns are centred and scaled before fitting and the
    coefficients mapped back afterwards. Iteration stops once the largest
    score component (on the fitting scale) is at most ``tol``; failing that,
    the model is returned with ``converged=False`` and a ConvergenceWarning.

    Raises
    ------
    ValueError
        Labels are not 0/1, contain one class only, or n < p + 1.
    SeparationError
        A standardized coefficient exceeds ``separation_threshold`` in
        absolute value.
    """
    y = np.asarray(labels, dtype=float).ravel()
    n = y.size
    X = np.asarray(covariates, dtype=float).reshape(n, -1) if n else np.empty((0, 0))
    p = X.shape[1]
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if y.min(initial=1) == y.max(initial=0) or n == 0:
        raise ValueError("labels contain a single class; the MLE does not exist")
    if n < p + 1:
        raise ValueError(f"need n >= p + 1 observations, got n={n}, p={p}")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))

    center = np.zeros(p)
    scale = np.ones(p)
    for j in range(p):
        col = X[:, j]
        if np.ptp(col) == 0:
            raise ValueError(f"covariate {names[j]!r} is constant; it is collinear with the intercept")
        if not np.all((col == 0) | (col == 1)):
            center[j] = col.mean()
            scale[j] = col.std()
    D = _design((X - center) / scale)

    beta = np.zeros(p + 1)
    eta = D @ beta
    ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    converged = False
    it = 0
    for it in range(max_iter + 1):
        mu = expit(eta)
        grad = D.T @ (y - mu)
        max_score = float(np.max(np.abs(grad)))
        if max_score <= tol:
            converged = True
            break
        if it == max_iter:
            break
        H = (D * (mu * (1.0 - mu))[:, None]).T @ D
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        for _ in range(50):
            cand = beta + t * step
            eta_c = D @ cand
            ll_c = float(np.sum(y * eta_c - np.logaddexp(0.0, eta_c)))
            if ll_c >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        beta, eta, ll = cand, eta_c, ll_c
        if np.max(np.abs(beta)) > separation_threshold:
            raise SeparationError(
                f"standardized coefficient {np.max(np.abs(beta)):.3g} exceeds {separation_threshold} "
                f"(covariates {names}); the trials are (quasi-)separated"
            )

    if not converged:
        warnings.warn(f"IRLS stopped after {it} iterations, max score {max_score:.3g}", ConvergenceWarning,
                      stacklevel=2)
    slopes = beta[1:] / scale
    intercept = beta[0] - float(np.sum(slopes * center))
    return PropensityModel(
        coefficients=np.concatenate([[intercept], slopes]),
        covariates=names,
        iterations=it,
        converged=converged,
        max_score=max_score,
    )


def predict(model: PropensityModel, x) -> np.ndarray | float:
    """Propensity for one covariate vector (returns float) or for each row of a matrix."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != model.p:
        raise ValueError(f"expected {model.p} covariates, got {X.shape[1]}")
    eps = np.clip(expit(_design(X) @ model.coefficients), _P_LO, _P_HI)
    return float(eps[0]) if single else eps


@dataclass(frozen=True)
class StratumPropensity:
    eps: Fraction
    n1: int
    n0: int
    positivity_warning: bool = False


def exact_discrete_propensity(counts: Mapping[Hashable, tuple]) -> dict:
    """Exact eps per stratum from (count in T=1, count in T=0).

    eps = n1 / (n1 + n0), kept as a Fraction. A stratum missing from one trial
    gets eps 0 or 1 and ``positivity_warning=True``; a PositivityWarning is
    also emitted.
    """
    out = {}
    for key, (n1, n0) in counts.items():
        n1, n0 = int(n1), int(n0)
        if n1 < 0 or n0 < 0 or n1 + n0 == 0:
            raise ValueError(f"stratum {key!r} needs a positive total count, got ({n1}, {n0})")
        flag = n1 == 0 or n0 == 0
        if flag:
            warnings.warn(f"stratum {key!r} appears in only one trial", PositivityWarning, stacklevel=2)
        out[key] = StratumPropensity(Fraction(n1, n1 + n0), n1, n0, flag)
    return out


def stratum_counts(X1, X0) -> dict:
    """Tabulate covariate patterns: {row tuple: (count in T=1 rows, count in T=0 rows)}."""
    counts: dict = {}
    for label, X in ((0, X1), (1, X0)):
        rows, k = np.unique(np.asarray(X, float), axis=0, return_counts=True)
        for r, c in zip(rows, k):
            r = tuple(float(v) for v in r)
            pair = counts.setdefault(r, [0, 0])
            pair[label] += int(c)
    return {key: tuple(v) for key, v in sorted(counts.items())}
