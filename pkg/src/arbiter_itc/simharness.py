"""Monte Carlo scenarios for the paradox and the arbitrated estimators.

Each replicate simulates an AC and a BC trial and runs four analyses:

* ``maic_sponsor_a``: classic MAIC with AC IPD and BC AgD (A vs B, BC population)
* ``maic_sponsor_b``: classic MAIC with BC IPD and AC AgD, reported as A vs B
  (AC population)
* ``arbitrated_ipd``: arbitrator fits the pooled propensity model
* ``arbitrated_simulation``: each sponsor simulates the other's covariates

True values for binary-covariate scenarios come from exact enumeration over
covariate patterns using the population trial-membership propensities.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
from scipy.special import expit, logit

from .arbitration import (ArbitrationConfig, arbitrate_ipd, arbitrator_combine, sponsor_run,
                          sponsor_run_selfservice)
from .data_model import DEFAULT_EVENT, IpdTrial, make_specs, summarize_ipd
from .errors import ArbiterError, SchemaError
from .estimators import Z975, classic_maic
from .schemas import SCENARIO_SCHEMA, SCHEMA_VERSION, STUDY_REPORT_SCHEMA

METHODS = ("maic_sponsor_a", "maic_sponsor_b", "arbitrated_ipd", "arbitrated_simulation")
ABORT_LIMIT = 0.01


@dataclass(frozen=True)
class OutcomeModel:
    """logit P(event) = intercept + prognostic.x + active * (treatment + interaction.x)."""

    intercept: float
    prognostic: tuple
    treatment: float
    interaction: tuple

    def prob(self, X, active) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        eta = (self.intercept + X @ np.asarray(self.prognostic, float)
               + np.asarray(active, float) * (self.treatment + X @ np.asarray(self.interaction, float)))
        return expit(eta)


@dataclass(frozen=True)
class ScenarioSpec:
    n_per_arm: int
    covariate_specs: tuple
    trial_means: dict
    outcome_model: dict
    replicates: int
    seed: int
    name: str = "scenario"
    event: int = DEFAULT_EVENT

    def __post_init__(self):
        p = len(self.covariate_specs)
        if self.n_per_arm < 1:
            raise ValueError("n_per_arm must be positive")
        if self.replicates < 1:
            raise ValueError("replicate count must be positive")
        for t in ("AC", "BC"):
            m = np.asarray(self.trial_means[t], float)
            om = self.outcome_model[t]
            if m.shape != (p,) or len(om.prognostic) != p or len(om.interaction) != p:
                raise ValueError(f"{t}: means and outcome coefficients need {p} entries")
            for s, v in zip(self.covariate_specs, m):
                if s.kind == "binary" and not 0.0 <= v <= 1.0:
                    raise ValueError(f"{t}: proportion {v} for {s.name!r} outside [0, 1]")
            coefs = [om.intercept, om.treatment, *om.prognostic, *om.interaction]
            if not all(math.isfinite(c) for c in coefs):
                raise ValueError(f"{t}: outcome coefficients must be finite")
        if self.discrete:
            for X, t, a in self._patterns_by_arm():
                pr = self.outcome_model[t].prob(X, a)
                if np.any((pr <= 0.0) | (pr >= 1.0)):
                    raise ValueError(f"{t}: outcome probabilities must lie strictly inside (0, 1)")

    @property
    def discrete(self) -> bool:
        return all(s.kind == "binary" for s in self.covariate_specs)

    def _patterns_by_arm(self):
        X = patterns(len(self.covariate_specs))
        for t in ("AC", "BC"):
            for a in (0.0, 1.0):
                yield X, t, a

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "scenario",
            "name": self.name,
            "n_per_arm": self.n_per_arm,
            "covariates": [s.to_dict() for s in self.covariate_specs],
            "trial_means": {t: [float(v) for v in m] for t, m in self.trial_means.items()},
            "outcome_model": {t: {"intercept": om.intercept, "prognostic": list(om.prognostic),
                                  "treatment": om.treatment, "interaction": list(om.interaction)}
                              for t, om in self.outcome_model.items()},
            "replicates": self.replicates,
            "seed": self.seed,
            "event": self.event,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioSpec:
        try:
            jsonschema.validate(d, SCENARIO_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"scenario: {exc.message}") from None
        try:
            return cls(
                n_per_arm=d["n_per_arm"],
                covariate_specs=make_specs([c["name"] for c in d["covariates"]], [c["kind"] for c in d["covariates"]]),
                trial_means={t: tuple(v) for t, v in d["trial_means"].items()},
                outcome_model={t: OutcomeModel(o["intercept"], tuple(o["prognostic"]), o["treatment"],
                                               tuple(o["interaction"]))
                               for t, o in d["outcome_model"].items()},
                replicates=d["replicates"],
                seed=d["seed"],
                name=d.get("name", "scenario"),
                event=d.get("event", DEFAULT_EVENT),
            )
        except ValueError as exc:
            raise SchemaError(f"scenario: {exc}") from None

    @classmethod
    def load(cls, path) -> ScenarioSpec:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from None

    def replace(self, **kw) -> ScenarioSpec:
        d = dict(self.__dict__)
        d.update(kw)
        return ScenarioSpec(**d)


def patterns(p: int) -> np.ndarray:
    return np.array(list(itertools.product([0.0, 1.0], repeat=p))).reshape(-1, p)


def paradox_scenario(replicates: int = 1000, n_per_arm: int = 600, seed: int = 2025) -> ScenarioSpec:
    """Cell probabilities of the worked example: P(Y=0) by trial, arm and race."""
    pc = {1: 0.4, 0: 0.1}

    def model(p_active):
        prog = logit(pc[1]) - logit(pc[0])
        return OutcomeModel(float(logit(pc[0])), (float(prog),),
                            float(logit(p_active[0]) - logit(pc[0])),
                            (float(logit(p_active[1]) - logit(p_active[0]) - prog),))

    return ScenarioSpec(
        n_per_arm=n_per_arm,
        covariate_specs=make_specs(["black"]),
        trial_means={"AC": (1 / 3,), "BC": (2 / 3,)},
        outcome_model={"AC": model({1: 0.9, 0: 0.2}), "BC": model({1: 0.6, 0: 0.5})},
        replicates=replicates,
        seed=seed,
        name="paradox",
    )


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream per replicate: key = master seed, counter offset = index."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, index]))


def _draw_trial(spec: ScenarioSpec, trial_id: str, rng: np.random.Generator) -> IpdTrial:
    n = 2 * spec.n_per_arm
    means = np.asarray(spec.trial_means[trial_id], float)
    X = np.empty((n, len(means)))
    for j, s in enumerate(spec.covariate_specs):
        if s.kind == "binary":
            X[:, j] = (rng.random(n) < means[j]).astype(float)
        else:
            X[:, j] = means[j] + rng.standard_normal(n)
    active = np.r_[np.ones(spec.n_per_arm), np.zeros(spec.n_per_arm)]
    event = rng.random(n) < spec.outcome_model[trial_id].prob(X, active)
    y = np.where(event, spec.event, 1 - spec.event)
    label = "A" if trial_id == "AC" else "B"
    return IpdTrial(
        trial_id=trial_id,
        subject_ids=[f"{trial_id}-{i + 1:05d}" for i in range(n)],
        arms=np.where(active == 1, label, "C"),
        outcomes=y,
        covariates=X,
        covariate_specs=spec.covariate_specs,
        event=spec.event,
    )


def simulate_pair(spec: ScenarioSpec, index: int) -> tuple[IpdTrial, IpdTrial]:
    """AC and BC trials for one replicate; deterministic in (spec.seed, index)."""
    rng = replicate_rng(spec.seed, index)
    return _draw_trial(spec, "AC", rng), _draw_trial(spec, "BC", rng)


def _marginal_logor(model: OutcomeModel, X, g) -> float:
    return float(logit(g @ model.prob(X, 1.0)) - logit(g @ model.prob(X, 0.0)))


def true_effects(spec: ScenarioSpec) -> dict:
    """Exact A-vs-B marginal log odds ratios in the BC, AC and overlap populations.

    Uses population trial propensities eps(x) = n_AC f_AC(x) / (n_AC f_AC(x) + n_BC f_BC(x)).
    Returns None values when any covariate is continuous.
    """
    if not spec.discrete:
        return {m: None for m in METHODS}
    X = patterns(len(spec.covariate_specs))

    def density(t):
        m = np.asarray(spec.trial_means[t], float)
        return np.prod(np.where(X == 1, m, 1 - m), axis=1)

    n = 2 * spec.n_per_arm
    f1, f0 = density("AC"), density("BC")
    mass1, mass0 = n * f1, n * f0
    total = mass1 + mass0
    eps = np.divide(mass1, total, out=np.zeros_like(total), where=total > 0)
    overlap = total * eps * (1 - eps)
    overlap = overlap / overlap.sum()
    om_ac, om_bc = spec.outcome_model["AC"], spec.outcome_model["BC"]

    def a_vs_b(g):
        return _marginal_logor(om_ac, X, g) - _marginal_logor(om_bc, X, g)

    ato = a_vs_b(overlap)
    return {
        "maic_sponsor_a": a_vs_b(f0),
        "maic_sponsor_b": a_vs_b(f1),
        "arbitrated_ipd": ato,
        "arbitrated_simulation": ato,
    }


def run_replicate(spec: ScenarioSpec, index: int) -> dict:
    """All four analyses on one replicate; failures are returned, not raised."""
    row = {"index": index, "error": None}
    try:
        ac, bc = simulate_pair(spec, index)
        agd_ac, agd_bc = summarize_ipd(ac), summarize_ipd(bc)
        names = ac.covariate_names
        ma = classic_maic(ac, agd_bc).estimate
        mb = classic_maic(bc, agd_ac).estimate
        row["maic_sponsor_a"] = (ma.point, ma.se)
        row["maic_sponsor_b"] = (-mb.point, mb.se)
        cfg1 = ArbitrationConfig("ipd-shared", names)
        pa, pb = arbitrate_ipd(ac, bc, cfg1)
        e1 = arbitrator_combine(sponsor_run(ac, pa, cfg1), sponsor_run(bc, pb, cfg1), cfg1)
        row["arbitrated_ipd"] = (e1.point, e1.se)
        cfg2 = ArbitrationConfig("covariate-simulation", names, seed=(spec.seed + index + 1) % 2**64)
        e2 = arbitrator_combine(sponsor_run_selfservice(ac, agd_bc, cfg2),
                                sponsor_run_selfservice(bc, agd_ac, cfg2), cfg2)
        row["arbitrated_simulation"] = (e2.point, e2.se)
    except (ArbiterError, ValueError) as exc:
        row["error"] = f"replicate {index}: {type(exc).__name__}: {exc}"
    return row


def _run_chunk(args):
    spec, indices = args
    return [run_replicate(spec, i) for i in indices]


def _fsum_mean(v) -> float:
    return math.fsum(v) / len(v)


@dataclass
class StudyReport:
    scenario: str
    replicates: int
    aborted: int
    failed: bool
    methods: dict
    sign_flip_rate: float | None
    all_methods_agree: bool
    errors: list = field(default_factory=list)
    rows: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "study-report",
            "scenario": self.scenario,
            "replicates": self.replicates,
            "aborted": self.aborted,
            "failed": self.failed,
            "methods": self.methods,
            "sign_flip_rate": self.sign_flip_rate,
            "all_methods_agree": self.all_methods_agree,
            "errors": list(self.errors),
        }

    def to_text(self) -> str:
        head = f"{'method':<24}{'truth':>10}{'mean':>10}{'emp.SE':>10}{'mean SE':>10}{'coverage':>10}"
        lines = [f"scenario {self.scenario}: {self.replicates} replicates, {self.aborted} aborted", head,
                 "-" * len(head)]

        def f(v):
            return f"{v:>10.4f}" if v is not None else f"{'-':>10}"

        for m in METHODS:
            s = self.methods[m]
            lines.append(f"{m:<24}{f(s['truth'])}{f(s['mean'])}{f(s['empirical_se'])}{f(s['mean_se'])}"
                         f"{f(s['coverage'])}")
        lines.append(f"sign-flip rate (each sponsor favours its own drug): "
                     f"{'-' if self.sign_flip_rate is None else format(self.sign_flip_rate, '.4f')}")
        lines.append(f"all methods agree: {self.all_methods_agree}")
        if self.failed:
            lines.append(f"STUDY FAILED: more than {ABORT_LIMIT:.0%} of replicates aborted")
        return "\n".join(lines)


def summarize_rows(spec: ScenarioSpec, rows: list) -> StudyReport:
    """Order-insensitive reduction of replicate rows into a StudyReport."""
    rows = sorted(rows, key=lambda r: r["index"])
    ok = [r for r in rows if r["error"] is None]
    errors = [r["error"] for r in rows if r["error"] is not None]
    truth = true_effects(spec)
    methods = {}
    for m in METHODS:
        pts = [r[m][0] for r in ok]
        ses = [r[m][1] for r in ok]
        s = {"mean": None, "empirical_se": None, "mean_se": None, "coverage": None, "truth": truth[m],
             "n_ok": len(pts)}
        if pts:
            mean = _fsum_mean(pts)
            s["mean"] = mean
            s["mean_se"] = _fsum_mean(ses)
            if len(pts) > 1:
                s["empirical_se"] = math.sqrt(math.fsum((x - mean) ** 2 for x in pts) / (len(pts) - 1))
            if truth[m] is not None:
                s["coverage"] = sum(abs(x - truth[m]) <= Z975 * e for x, e in zip(pts, ses)) / len(pts)
        methods[m] = s
    flip = None
    if ok:
        # paradox direction: sponsor A favours A and sponsor B favours B (both in A-vs-B orientation)
        flip = sum(r["maic_sponsor_a"][0] > 0 > r["maic_sponsor_b"][0] for r in ok) / len(ok)
    agree = bool(ok)
    if len(ok) > 1:
        for m1, m2 in itertools.combinations(METHODS, 2):
            s1, s2 = methods[m1], methods[m2]
            band = 3.0 * math.sqrt((s1["empirical_se"] ** 2 + s2["empirical_se"] ** 2) / len(ok))
            if abs(s1["mean"] - s2["mean"]) > band:
                agree = False
    aborted = len(errors)
    return StudyReport(spec.name, len(rows), aborted, aborted > ABORT_LIMIT * len(rows), methods,
                       None if flip is None else float(flip), agree, errors, rows)


def run_study(spec: ScenarioSpec, threads: int = 1) -> StudyReport:
    """Run every replicate of ``spec`` (optionally across worker processes) and summarize."""
    idx = list(range(spec.replicates))
    if threads <= 1 or spec.replicates < 2:
        rows = [run_replicate(spec, i) for i in idx]
    else:
        chunks = [(spec, idx[k::threads]) for k in range(threads) if idx[k::threads]]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            rows = [r for part in pool.map(_run_chunk, chunks) for r in part]
    return summarize_rows(spec, rows)


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, STUDY_REPORT_SCHEMA)
