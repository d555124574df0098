"""Weighted within-trial treatment effects and the anchored A-vs-B contrast."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .data_model import AgdSummary, IpdTrial
from .errors import DegenerateCellError
from .weighting import WeightVector, maic_weights, weighted_means

Z975 = 1.959964
SCALES = ("logOR", "riskdiff", "meandiff")


@dataclass(frozen=True)
class EffectEstimate:
    scale: str
    estimand: str
    point: float
    se: float | None = None
    provenance: str = ""

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.se is not None and not self.se >= 0:
            raise ValueError("se must be nonnegative")
        object.__setattr__(self, "point", float(self.point))
        if self.se is not None:
            object.__setattr__(self, "se", float(self.se))

    @property
    def ci95(self) -> tuple[float, float] | None:
        if self.se is None:
            return None
        return (self.point - Z975 * self.se, self.point + Z975 * self.se)

    def to_dict(self) -> dict:
        ci = self.ci95
        return {
            "scale": self.scale,
            "estimand": self.estimand,
            "point": self.point,
            "se": self.se,
            "ci95": None if ci is None else list(ci),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EffectEstimate:
        return cls(d["scale"], d["estimand"], d["point"], d.get("se"), d.get("provenance", ""))


def _weights(trial: IpdTrial, w) -> np.ndarray:
    w = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    if w.size != trial.n:
        raise ValueError(f"{w.size} weights for {trial.n} records")
    return w


def _cells(trial: IpdTrial, w: np.ndarray, event) -> dict:
    ev = trial.event_indicator(event)
    z = trial.treated
    e = trial.event if event is None else event
    cells = {
        f"{trial.active}/event(Y={e})": np.sum(w * z * ev),
        f"{trial.active}/nonevent": np.sum(w * z * (1 - ev)),
        f"{trial.anchor}/event(Y={e})": np.sum(w * (1 - z) * ev),
        f"{trial.anchor}/nonevent": np.sum(w * (1 - z) * (1 - ev)),
    }
    for name, mass in cells.items():
        if not mass > 0:
            raise DegenerateCellError(name)
    return cells


def weighted_logodds(trial: IpdTrial, w, event: int | None = None, estimand: str = "trial-matched") -> EffectEstimate:
    """Weighted log odds ratio of the event, active arm versus anchor arm.

    ``log[(a_event * c_nonevent) / (a_nonevent * c_event)]`` over weighted
    cell totals, natural log. No continuity correction: an empty weighted cell
    raises DegenerateCellError.
    """
    if trial.outcome_type != "binary":
        raise ValueError("log odds ratio needs a binary outcome")
    a_ev, a_non, c_ev, c_non = _cells(trial, _weights(trial, w), event).values()
    point = math.log(a_ev) + math.log(c_non) - math.log(a_non) - math.log(c_ev)
    return EffectEstimate("logOR", estimand, point, None, f"{trial.trial_id}: {trial.active} vs {trial.anchor}")


def weighted_contrast(
    trial: IpdTrial,
    w,
    scale: str = "logOR",
    estimand: str = "trial-matched",
    event: int | None = None,
    provenance: str | None = None,
) -> EffectEstimate:
    """Weighted two-parameter marginal model with a robust (sandwich) SE.

    The model is ``g(E[Y]) = b0 + b1 * active`` with g = logit on the event
    indicator (logOR), identity on the event indicator (riskdiff) or identity
    on the raw outcome (meandiff). The weighted estimating equations
    ``sum_i w_i x_i (y_i - mu_i) = 0`` are saturated in the arm indicator, so
    their root is the pair of weighted arm means mapped through g. The
    variance is ``A^-1 B A^-T`` with ``A = sum_i w_i x_i x_i' g'^-1(eta_i)``
    and ``B = sum_i w_i^2 psi_i psi_i'``, one subject per cluster.
    """
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    w = _weights(trial, w)
    z = trial.treated
    if scale == "meandiff":
        y = trial.outcomes
        for label, mask in ((trial.active, z), (trial.anchor, 1 - z)):
            if not np.sum(w * mask) > 0:
                raise DegenerateCellError(label, f"arm {label!r} has zero weighted mass")
    else:
        if trial.outcome_type != "binary":
            raise ValueError(f"{scale} needs a binary outcome")
        _cells(trial, w, event)
        y = trial.event_indicator(event)
    m_act = np.sum(w * z * y) / np.sum(w * z)
    m_anc = np.sum(w * (1 - z) * y) / np.sum(w * (1 - z))

    X = np.column_stack([np.ones(trial.n), z])
    if scale == "logOR":
        beta = np.array([logit(m_anc), logit(m_act) - logit(m_anc)])
        mu = expit(X @ beta)
        dmu = mu * (1.0 - mu)
    else:
        beta = np.array([m_anc, m_act - m_anc])
        mu = X @ beta
        dmu = np.ones(trial.n)
    psi = X * (y - mu)[:, None]
    A = (X * (w * dmu)[:, None]).T @ X
    B = (psi * (w * w)[:, None]).T @ psi
    A_inv = np.linalg.inv(A)
    V = A_inv @ B @ A_inv.T
    prov = provenance if provenance is not None else f"{trial.trial_id}: {trial.active} vs {trial.anchor}"
    return EffectEstimate(scale, estimand, float(beta[1]), math.sqrt(max(V[1, 1], 0.0)), prov)


def anchored_combine(a: EffectEstimate, b: EffectEstimate, provenance: str | None = None) -> EffectEstimate:
    """Indirect contrast through the common anchor: a - b with root-sum-square SE."""
    if a.scale != b.scale:
        raise ValueError(f"scale mismatch: {a.scale} vs {b.scale}")
    if (a.se is None) != (b.se is None):
        raise ValueError("either both estimates carry a standard error or neither does")
    se = None if a.se is None else math.hypot(a.se, b.se)
    estimand = a.estimand if a.estimand == b.estimand else "trial-matched"
    prov = provenance if provenance is not None else f"[{a.provenance}] - [{b.provenance}]"
    return EffectEstimate(a.scale, estimand, a.point - b.point, se, prov)


def published_effect(agd: AgdSummary, scale: str = "logOR") -> EffectEstimate:
    """AgD-side relative effect: the published value, else computed from arm summaries."""
    where = f"{agd.trial_id} aggregate data"
    if agd.published is not None:
        pub = agd.published
        return EffectEstimate(pub.scale, "ATE", pub.point, pub.se, f"{where} (published)")
    if not agd.outcomes:
        raise ValueError(f"{where}: neither a published effect nor outcome summaries are available")
    active, anchor = agd.arm_labels
    try:
        oa, oc = agd.outcomes[active], agd.outcomes[anchor]
    except KeyError as exc:
        raise ValueError(f"{where}: no outcome summary for arm {exc.args[0]!r}") from None
    if scale == "meandiff":
        if oa.mean is None or oc.mean is None:
            raise ValueError(f"{where}: arm means missing")
        se = None
        if oa.sd is not None and oc.sd is not None:
            se = math.sqrt(oa.sd**2 / oa.n + oc.sd**2 / oc.n)
        return EffectEstimate("meandiff", "ATE", oa.mean - oc.mean, se, where)
    if oa.events is None or oc.events is None:
        raise ValueError(f"{where}: event counts missing")
    cells = {
        f"{active}/event": oa.events, f"{active}/nonevent": oa.nonevents,
        f"{anchor}/event": oc.events, f"{anchor}/nonevent": oc.nonevents,
    }
    for name, k in cells.items():
        if not k > 0:
            raise DegenerateCellError(name)
    if scale == "logOR":
        point = math.log(oa.events * oc.nonevents / (oa.nonevents * oc.events))
        se = math.sqrt(sum(1.0 / k for k in cells.values()))
    else:
        pa, pc = oa.events / oa.n, oc.events / oc.n
        point = pa - pc
        se = math.sqrt(pa * (1 - pa) / oa.n + pc * (1 - pc) / oc.n)
    return EffectEstimate(scale, "ATE", point, se, f"{where} (from counts)")


@dataclass(frozen=True)
class MaicResult:
    """Classic (sponsor-side) MAIC: own trial reweighted to the counterpart's population."""

    estimate: EffectEstimate
    ipd_effect: EffectEstimate
    agd_effect: EffectEstimate
    weights: WeightVector
    balance: dict


def classic_maic(ipd: IpdTrial, agd: AgdSummary, scale: str = "logOR") -> MaicResult:
    """Reweight ``ipd`` to ``agd``'s covariate means and subtract the AgD effect.

    The result contrasts the IPD trial's active drug against the AgD trial's
    active drug (A vs B when the IPD is the AC trial).
    """
    names = ipd.covariate_names
    if tuple(agd.covariate_names) != names:
        raise ValueError(f"covariate lists differ: {names} vs {agd.covariate_names}")
    w = maic_weights(ipd.covariates, agd.covariate_means, names=names, subject_ids=ipd.subject_ids)
    own = weighted_contrast(ipd, w, scale, estimand="trial-matched",
                            provenance=f"{ipd.trial_id} IPD weighted to {agd.trial_id} covariate means")
    other = published_effect(agd, scale)
    est = anchored_combine(own, other, provenance=f"MAIC {ipd.active} vs {agd.arm_labels[0]} "
                                                  f"in the {agd.trial_id} population")
    balance = {
        "covariates": list(names),
        "target": [float(v) for v in agd.covariate_means],
        "unweighted": [float(v) for v in ipd.covariates.mean(axis=0)],
        "weighted": [float(v) for v in weighted_means(ipd.covariates, w)],
    }
    return MaicResult(est, own, other, w, balance)
