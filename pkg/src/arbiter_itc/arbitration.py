"""The two arbitrated-MAIC protocols as exchanges of JSON documents.

Roles and messages::

    ipd-shared            arbitrator  --weights-package-->  sponsor A / sponsor B
                          sponsor     --results-package-->  arbitrator
    covariate-simulation  each sponsor simulates the counterpart's covariates from
                          its AgD with the agreed seed, fits the agreed propensity
                          model itself and sends a results package

Every package carries the SHA-256 of the canonical configuration so the
arbitrator can detect sponsors that ran different models.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .covgen import CovGenModel, build_model, generate
from .data_model import AgdSummary, IpdTrial, make_specs
from .errors import ProtocolError, SchemaError, SeparationError
from .estimators import EffectEstimate, anchored_combine, weighted_contrast
from .propensity import PropensityModel, fit_logistic, predict
from .rng import GENERATOR_ID
from .schemas import (CONFIG_SCHEMA, RESULTS_PACKAGE_SCHEMA, SCHEMA_VERSION,
                      WEIGHTS_PACKAGE_SCHEMA)
from .weighting import WeightVector, overlap_weights, weighted_means

PROTOCOLS = ("ipd-shared", "covariate-simulation")
SPONSOR_OF = {"AC": "sponsorA", "BC": "sponsorB"}
DEFAULT_COVGEN = {"correlation_source": "auto", "binary_margin": "exact-count", "generator": GENERATOR_ID}


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, floats at 17 significant digits."""
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(json.dumps(k) + ":" + canonical_json(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise ValueError("non-finite number in canonical JSON")
        return format(float(obj), ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def sha256_hex(text: str | bytes) -> str:
    return hashlib.sha256(text.encode() if isinstance(text, str) else text).hexdigest()


def matrix_hash(X) -> str:
    """Hash of a float64 matrix: shape header plus little-endian bytes."""
    X = np.ascontiguousarray(np.asarray(X, dtype="<f8"))
    return sha256_hex(f"{X.shape}".encode() + X.tobytes())


def write_document(doc: dict, path) -> Path:
    path = Path(path)
    path.write_text(canonical_json(doc) + "\n")
    return path


def _load(path, schema: dict, what: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
        jsonschema.validate(doc, schema)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{path}: not a valid {what}: {exc.message}") from None
    return doc


@dataclass(frozen=True)
class ArbitrationConfig:
    """Settings the arbitrator fixes for both sponsors."""

    protocol: str
    covariates: tuple
    propensity_covariates: tuple | None = None
    link: str = "logit"
    covgen: dict | None = None
    seed: int | None = None
    scale: str = "logOR"
    estimand: str = "ATO"

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        pc = self.propensity_covariates
        object.__setattr__(self, "propensity_covariates", tuple(pc) if pc is not None else self.covariates)
        if self.protocol not in PROTOCOLS:
            raise ProtocolError(f"unknown protocol {self.protocol!r}")
        if self.estimand != "ATO":
            raise ProtocolError("arbitrated comparisons target the ATO only")
        if not set(self.propensity_covariates) <= set(self.covariates):
            raise ProtocolError("propensity covariates must be a subset of the covariate list")
        if self.protocol == "ipd-shared":
            if self.seed is not None or self.covgen is not None:
                raise ProtocolError("protocol ipd-shared takes neither a seed nor a covariate generating model")
        else:
            if self.seed is None:
                raise ProtocolError("protocol covariate-simulation requires a seed")
            if self.covgen is None:
                object.__setattr__(self, "covgen", dict(DEFAULT_COVGEN))
            else:
                object.__setattr__(self, "covgen", {**DEFAULT_COVGEN, **self.covgen})

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "arbitration-config",
            "protocol": self.protocol,
            "covariates": list(self.covariates),
            "propensity": {"covariates": list(self.propensity_covariates), "link": self.link},
            "covgen": self.covgen,
            "seed": self.seed,
            "scale": self.scale,
            "estimand": self.estimand,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ArbitrationConfig:
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"arbitration config: {exc.message}") from None
        return cls(
            protocol=d["protocol"],
            covariates=tuple(d["covariates"]),
            propensity_covariates=tuple(d["propensity"]["covariates"]),
            link=d["propensity"]["link"],
            covgen=d.get("covgen"),
            seed=d.get("seed"),
            scale=d["scale"],
            estimand=d["estimand"],
        )

    @classmethod
    def load(cls, path) -> ArbitrationConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def with_seed(self, seed: int) -> ArbitrationConfig:
        return ArbitrationConfig(self.protocol, self.covariates, self.propensity_covariates, self.link,
                                 self.covgen, seed, self.scale, self.estimand)

    @property
    def hash(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))


@dataclass(frozen=True, eq=False)
class WeightsPackage:
    recipient: str
    trial_id: str
    weights: WeightVector
    propensity: PropensityModel
    config_hash: str

    @property
    def subject_ids(self) -> tuple:
        return self.weights.subject_ids

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "weights-package",
            "recipient": self.recipient,
            "trial_id": self.trial_id,
            "weights": self.weights.to_dict(),
            "propensity": self.propensity.to_dict(),
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> WeightsPackage:
        return cls(d["recipient"], d["trial_id"], WeightVector.from_dict(d["weights"]),
                   PropensityModel.from_dict(d["propensity"]), d["config_hash"])

    @classmethod
    def load(cls, path) -> WeightsPackage:
        return cls.from_dict(_load(path, WEIGHTS_PACKAGE_SCHEMA, "weights package"))


@dataclass(frozen=True, eq=False)
class ResultsPackage:
    sender: str
    trial_id: str
    protocol: str
    estimate: EffectEstimate
    ess: float
    balance: dict
    config_hash: str
    covariate_hash: str | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "results-package",
            "sender": self.sender,
            "trial_id": self.trial_id,
            "protocol": self.protocol,
            "estimate": self.estimate.to_dict(),
            "ess": float(self.ess),
            "balance": self.balance,
            "config_hash": self.config_hash,
            "covariate_hash": self.covariate_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ResultsPackage:
        return cls(d["sender"], d["trial_id"], d["protocol"], EffectEstimate.from_dict(d["estimate"]),
                   d["ess"], d["balance"], d["config_hash"], d.get("covariate_hash"))

    @classmethod
    def load(cls, path) -> ResultsPackage:
        return cls.from_dict(_load(path, RESULTS_PACKAGE_SCHEMA, "results package"))


def _columns(names_have: tuple, names_want: tuple, what: str) -> list[int]:
    missing = [n for n in names_want if n not in names_have]
    if missing:
        raise ProtocolError(f"{what} lacks covariates {missing}")
    return [names_have.index(n) for n in names_want]


def _fit(X, T, names) -> PropensityModel:
    try:
        return fit_logistic(X, T, names=names)
    except SeparationError as exc:
        raise ProtocolError(f"protocol abort: propensity model separated ({exc})") from exc
    except ValueError as exc:
        raise ProtocolError(f"protocol abort: propensity model cannot be fitted ({exc})") from exc


def arbitrate_ipd(cov_ac: IpdTrial, cov_bc: IpdTrial, config: ArbitrationConfig):
    """Arbitrator step of the IPD-sharing protocol.

    Only the covariates and subject ids of the two inputs are read. The
    propensity model is fitted on the pooled rows with T=1 for AC and T=0 for
    BC; sponsor A receives ``1 - eps`` for its subjects and sponsor B receives
    ``eps`` for its subjects.

    Returns
    -------
    (WeightsPackage, WeightsPackage)
        Packages for sponsor A and sponsor B.
    """
    if config.protocol != "ipd-shared":
        raise ProtocolError("arbitrate_ipd runs the ipd-shared protocol only")
    if cov_ac.covariate_names != cov_bc.covariate_names:
        raise ProtocolError(f"covariate lists differ: {cov_ac.covariate_names} vs {cov_bc.covariate_names}")
    names = config.propensity_covariates
    X1 = cov_ac.covariates[:, _columns(cov_ac.covariate_names, names, "AC covariates")]
    X0 = cov_bc.covariates[:, _columns(cov_bc.covariate_names, names, "BC covariates")]
    model = _fit(np.vstack([X1, X0]), np.r_[np.ones(len(X1)), np.zeros(len(X0))], names)
    eps1, eps0 = predict(model, X1), predict(model, X0)
    h = config.hash
    pkg_a = WeightsPackage("sponsorA", "AC", overlap_weights(eps1, "T1", cov_ac.subject_ids), model, h)
    pkg_b = WeightsPackage("sponsorB", "BC", overlap_weights(eps0, "T0", cov_bc.subject_ids), model, h)
    return pkg_a, pkg_b


def _sponsor_results(trial: IpdTrial, w: WeightVector, config: ArbitrationConfig, covariate_hash=None,
                     extras=None) -> ResultsPackage:
    sender = SPONSOR_OF[trial.trial_id]
    est = weighted_contrast(trial, w, config.scale, estimand="ATO",
                            provenance=f"{sender}: {trial.trial_id} {trial.active} vs {trial.anchor}, "
                                       f"overlap weights ({config.protocol})")
    cols = _columns(trial.covariate_names, config.covariates, f"{trial.trial_id} IPD")
    balance = {
        "covariates": list(config.covariates),
        "means": [float(v) for v in weighted_means(trial.covariates[:, cols], w)],
    }
    return ResultsPackage(sender, trial.trial_id, config.protocol, est, w.ess, balance, config.hash,
                          covariate_hash, extras or {})


def sponsor_run(trial: IpdTrial, package: WeightsPackage, config: ArbitrationConfig) -> ResultsPackage:
    """Sponsor step of the IPD-sharing protocol: weighted analysis with the received weights."""
    if trial.trial_id not in SPONSOR_OF:
        raise ProtocolError(f"unknown trial {trial.trial_id!r}")
    sponsor = SPONSOR_OF[trial.trial_id]
    if package.recipient != sponsor:
        raise ProtocolError(f"weights package addressed to {package.recipient}, but this is {sponsor}'s trial")
    if package.config_hash != config.hash:
        raise ProtocolError("weights package was produced under a different configuration")
    if package.subject_ids is None or tuple(package.subject_ids) != tuple(trial.subject_ids):
        raise ProtocolError("weights package subject ids do not match the trial records")
    return _sponsor_results(trial, package.weights, config)


def _agd_subset(agd: AgdSummary, names: tuple) -> AgdSummary:
    idx = _columns(agd.covariate_names, names, f"{agd.trial_id} aggregate data")
    cov = None if agd.covariate_cov is None else agd.covariate_cov[np.ix_(idx, idx)]
    return AgdSummary(agd.trial_id, agd.arm_labels, agd.arm_sizes,
                      make_specs(names, [agd.covariate_specs[i].kind for i in idx]),
                      agd.covariate_means[idx], cov, agd.outcomes, agd.published, agd.event)


def _trial_subset(trial: IpdTrial, names: tuple) -> IpdTrial:
    idx = _columns(trial.covariate_names, names, f"{trial.trial_id} IPD")
    return IpdTrial(trial.trial_id, trial.subject_ids, trial.arms, trial.outcomes, trial.covariates[:, idx],
                    make_specs(names, [trial.covariate_specs[i].kind for i in idx]), trial.arm_labels,
                    trial.outcome_type, trial.event)


def simulate_counterpart(own: IpdTrial, counterpart: AgdSummary, config: ArbitrationConfig):
    """Covariate generating model and simulated counterpart covariates (config covariates only)."""
    names = config.covariates
    agd = _agd_subset(counterpart, names)
    mine = _trial_subset(own, names)
    tmpl = config.covgen
    try:
        model = build_model(agd, mine, tmpl["correlation_source"], config.seed, tmpl["binary_margin"])
        X = generate(model, agd.n)
    except ValueError as exc:
        raise ProtocolError(f"protocol abort: covariate generation failed ({exc})") from exc
    return model, X


def sponsor_run_selfservice(own: IpdTrial, counterpart: AgdSummary, config: ArbitrationConfig) -> ResultsPackage:
    """Sponsor step of the covariate-simulation protocol.

    The counterpart enters only through its aggregate data. Its covariates
    are simulated with the shared seed (published covariance if present,
    else the sponsor's own covariance), pooled with the sponsor's own
    covariates under their true trial labels, and the agreed propensity
    model yields the sponsor's overlap weights.
    """
    if config.protocol != "covariate-simulation":
        raise ProtocolError("self-service runs need protocol covariate-simulation")
    if config.seed is None:
        raise ProtocolError("self-service runs need the arbitrator's seed")
    if own.trial_id not in SPONSOR_OF or counterpart.trial_id == own.trial_id:
        raise ProtocolError("own IPD and counterpart AgD must come from different trials")
    model, X_sim = simulate_counterpart(own, counterpart, config)
    pnames = config.propensity_covariates
    X_own = own.covariates[:, _columns(own.covariate_names, pnames, f"{own.trial_id} IPD")]
    X_sim_p = X_sim[:, [config.covariates.index(n) for n in pnames]]
    if own.trial_id == "AC":
        X, T = np.vstack([X_own, X_sim_p]), np.r_[np.ones(len(X_own)), np.zeros(len(X_sim_p))]
    else:
        X, T = np.vstack([X_sim_p, X_own]), np.r_[np.ones(len(X_sim_p)), np.zeros(len(X_own))]
    pmodel = _fit(X, T, pnames)
    eps = predict(pmodel, X_own)
    w = overlap_weights(eps, "T1" if own.trial_id == "AC" else "T0", own.subject_ids)
    return _sponsor_results(own, w, config, matrix_hash(X_sim),
                            {"covgen": model.to_dict(), "propensity": pmodel.to_dict()})


def arbitrator_combine(ra: ResultsPackage, rb: ResultsPackage, config: ArbitrationConfig | None = None) -> EffectEstimate:
    """Arbitrator's final step: ATO estimate of A vs B with root-sum-square SE."""
    if ra.config_hash != rb.config_hash:
        raise ProtocolError("results packages were produced under different configurations")
    if config is not None and ra.config_hash != config.hash:
        raise ProtocolError("results packages do not match the arbitrator's configuration")
    by_sender = {r.sender: r for r in (ra, rb)}
    if set(by_sender) != {"sponsorA", "sponsorB"}:
        raise ProtocolError("need one results package from each sponsor")
    a, b = by_sender["sponsorA"], by_sender["sponsorB"]
    for r in (a, b):
        if r.estimate.estimand != "ATO":
            raise ProtocolError(f"{r.sender} reported a {r.estimate.estimand} estimate; arbitration needs ATO")
    if a.estimate.scale != b.estimate.scale:
        raise ProtocolError("sponsors used different effect scales")
    prov = (f"arbitrated ATO, A vs B via C; ess A={a.ess:.4f}, ess B={b.ess:.4f}; "
            f"balance A={dict(zip(a.balance['covariates'], a.balance['means']))}, "
            f"balance B={dict(zip(b.balance['covariates'], b.balance['means']))}")
    return anchored_combine(a.estimate, b.estimate, provenance=prov)
