"""Balancing weights: MAIC exponential tilting, overlap weights and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from .data_model import AgdSummary, IpdTrial
from .errors import InfeasibleTargetError
from .schemas import SCHEMA_VERSION

NORMALIZATIONS = ("sum-to-one", "mean-one", "raw")


class EstimandKind(str, Enum):
    """Target population defined by a tilt h(e) of the covariate density."""

    ATE = "ATE"
    ATT = "ATT"
    ATC = "ATC"
    ATO = "ATO"

    def h(self, e):
        e = np.asarray(e, dtype=float)
        if self is EstimandKind.ATE:
            return np.ones_like(e)
        if self is EstimandKind.ATT:
            return e.copy()
        if self is EstimandKind.ATC:
            return 1.0 - e
        return e * (1.0 - e)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Nonnegative per-subject weights.

    ``normalization`` records the convention the weights were produced under;
    every estimator in this package is invariant to rescaling, so the label is
    informational.
    """

    weights: np.ndarray
    normalization: str = "raw"
    subject_ids: tuple | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if not np.any(w > 0):
            raise ValueError("at least one weight must be positive")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.subject_ids is not None:
            ids = tuple(str(s) for s in self.subject_ids)
            if len(ids) != w.size:
                raise ValueError("subject_ids and weights differ in length")
            object.__setattr__(self, "subject_ids", ids)

    def __len__(self) -> int:
        return self.weights.size

    @property
    def ess(self) -> float:
        return ess(self.weights)

    def scaled(self, c: float) -> WeightVector:
        return WeightVector(self.weights * c, "raw", self.subject_ids)

    def normalized(self, normalization: str) -> WeightVector:
        w = self.weights
        if normalization == "sum-to-one":
            w = w / w.sum()
        elif normalization == "mean-one":
            w = w / w.mean()
        return WeightVector(w, normalization, self.subject_ids, dict(self.info))

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "weight-vector",
            "subject_ids": list(self.subject_ids) if self.subject_ids is not None else [],
            "weights": [float(v) for v in self.weights],
            "normalization": self.normalization,
            "ess": self.ess,
        }

    @classmethod
    def from_dict(cls, d: dict) -> WeightVector:
        ids = d.get("subject_ids") or None
        return cls(np.asarray(d["weights"], dtype=float), d["normalization"], ids)


def _as_array(w) -> np.ndarray:
    return w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)


def ess(w) -> float:
    """Effective sample size (sum w)^2 / sum w^2."""
    w = _as_array(w)
    w = w / w.max()  # scale-free; avoids underflow of w**2
    return float(w.sum() ** 2 / np.dot(w, w))


def tilt(kind: EstimandKind | str, eps) -> np.ndarray:
    """Tilt values h(eps) for ATE (1), ATT (eps), ATC (1 - eps) or ATO (eps(1 - eps))."""
    eps = np.asarray(eps, dtype=float)
    if np.any((eps < 0) | (eps > 1)):
        raise ValueError("propensities must lie in [0, 1]")
    return EstimandKind(kind).h(eps)


def overlap_weights(eps, side: str, subject_ids=None) -> WeightVector:
    """Overlap weights for the subjects of one trial.

    Subjects of the T=1 trial get ``1 - eps``, subjects of the T=0 trial get
    ``eps``: each subject is weighted by its probability of belonging to the
    other trial. Weights are returned unnormalized.
    """
    eps = np.asarray(eps, dtype=float)
    if np.any(~np.isfinite(eps)) or np.any((eps < 0) | (eps > 1)):
        raise ValueError("propensities must lie in [0, 1]")
    side = {"ipd-trial-is-T1": "T1", "ipd-trial-is-T0": "T0"}.get(side, side)
    if side == "T1":
        w = 1.0 - eps
    elif side == "T0":
        w = eps.copy()
    else:
        raise ValueError(f"side must be 'T1' or 'T0', got {side!r}")
    return WeightVector(w, "raw", subject_ids)


def maic_weights(
    covariates,
    target_means,
    normalization: str = "sum-to-one",
    names=None,
    subject_ids=None,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> WeightVector:
    """Method-of-moments MAIC weights ``w_i = exp(alpha . x_i)``.

    ``alpha`` minimizes ``sum_i exp(alpha . (x_i - target))`` by Newton's
    method with backtracking, starting from zero; at the optimum the weighted
    covariate means equal ``target_means``.

    Parameters
    ----------
    covariates : array_like, shape (n, p)
    target_means : array_like, shape (p,)
        Aggregate means (proportions for binary covariates) to match.
    normalization : {"sum-to-one", "mean-one", "raw"}
    names : sequence of str, optional
        Used in error messages.

    Raises
    ------
    InfeasibleTargetError
        The target is not in the interior of the convex hull of the rows, or
        a constant covariate has a different target.
    """
    X = np.asarray(covariates, dtype=float)
    t = np.atleast_1d(np.asarray(target_means, dtype=float))
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, p = X.shape
    if t.shape != (p,):
        raise ValueError(f"{t.size} targets for {p} covariates")
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]

    keep = []
    for j in range(p):
        lo, hi = X[:, j].min(), X[:, j].max()
        if lo == hi:
            if abs(t[j] - lo) > tol:
                raise InfeasibleTargetError(
                    f"covariate {names[j]!r} is constant at {lo:g} but its target is {t[j]:g}")
            continue
        if not lo < t[j] < hi:
            raise InfeasibleTargetError(
                f"target {t[j]:g} for {names[j]!r} lies outside the open range ({lo:g}, {hi:g}) of the "
                "IPD; the target means are not in the interior of the convex hull of the covariate rows")
        keep.append(j)

    Xc = X[:, keep] - t[keep]
    alpha = np.zeros(len(keep))
    it = 0
    if keep:
        s = Xc @ alpha
        f = logsumexp(s)
        for it in range(1, max_iter + 1):
            pi = np.exp(s - f)
            g = pi @ Xc
            if np.max(np.abs(g)) <= tol:
                break
            H = (Xc * pi[:, None]).T @ Xc
            try:
                d = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                d = -np.linalg.lstsq(H, g, rcond=None)[0]
            step, slope = 1.0, float(g @ d)
            while True:
                cand = alpha + step * d
                s_c = Xc @ cand
                f_c = logsumexp(s_c)
                # near the optimum the decrease falls below rounding of f
                if f_c <= f + 1e-4 * step * slope or f_c - f <= 8 * np.finfo(float).eps * max(1.0, abs(f)) \
                        or step < 1e-14:
                    break
                step *= 0.5
            if step < 1e-14 or not np.isfinite(f_c):
                raise InfeasibleTargetError(
                    "line search failed while matching moments; the target means are not in the interior "
                    f"of the convex hull of the covariate rows (residual {np.max(np.abs(g)):.3g})")
            alpha, s, f = cand, s_c, f_c
        else:
            raise InfeasibleTargetError(
                f"Newton iteration did not converge in {max_iter} steps; the target means are likely on the "
                "boundary of the convex hull of the covariate rows")
        s = Xc @ alpha
        w = np.exp(s - s.max())
    else:
        w = np.ones(n)

    resid = (w @ X) / w.sum() - t
    if np.max(np.abs(resid), initial=0.0) > 1e-8:
        raise InfeasibleTargetError(f"moment residual {np.max(np.abs(resid)):.3g} exceeds 1e-8")
    full_alpha = np.zeros(p)
    full_alpha[keep] = alpha
    out = WeightVector(w, "raw", subject_ids, {"alpha": full_alpha, "iterations": it,
                                               "max_residual": float(np.max(np.abs(resid), initial=0.0))})
    return out.normalized(normalization)


def with_second_moments(covariates, target_means, target_sds, columns):
    """Augment a MAIC problem so the listed columns also match target variances.

    Adds ``(x_j - target_mean_j)^2`` columns with targets ``target_sd_j^2``.
    """
    X = np.asarray(covariates, dtype=float)
    t = np.asarray(target_means, dtype=float)
    sq = [(X[:, j] - t[j]) ** 2 for j in columns]
    return np.column_stack([X, *sq]), np.concatenate([t, [target_sds[j] ** 2 for j in columns]])


def weighted_means(covariates, w) -> np.ndarray:
    w = _as_array(w)
    X = np.asarray(covariates, dtype=float).reshape(w.size, -1)
    total = w.sum()
    if total <= 0:
        raise ValueError("weights sum to zero")
    return (w @ X) / total


def weighted_covariate_summary(trial: IpdTrial, w) -> AgdSummary:
    """Weighted covariate means of a trial, packaged as an AgdSummary.

    Arm sizes are the unweighted counts; outcome and covariance fields are
    left empty.
    """
    warr = _as_array(w)
    if warr.size != trial.n:
        raise ValueError(f"{warr.size} weights for {trial.n} records")
    if not np.any(warr > 0):
        raise ValueError("all weights are zero")
    sizes = {arm: int(np.sum(trial.arms == arm)) for arm in trial.arm_labels}
    return AgdSummary(
        trial_id=trial.trial_id,
        arm_labels=trial.arm_labels,
        arm_sizes=sizes,
        covariate_specs=trial.covariate_specs,
        covariate_means=weighted_means(trial.covariates, warr),
        event=trial.event,
    )
