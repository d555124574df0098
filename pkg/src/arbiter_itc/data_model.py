"""Individual participant data (IPD) and aggregate data (AgD) containers.

An :class:`IpdTrial` stores one two-arm trial column-wise (covariate matrix,
arm labels, outcomes) so that downstream weighting and estimation can work on
numpy arrays directly; :meth:`IpdTrial.records` gives the row view.

On disk, IPD is a CSV file with header ``subject_id,arm,outcome,<covariates>``
and AgD is a JSON document tagged ``"schema": "arbiter-itc/v1"``.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import jsonschema
import numpy as np

from .errors import CovarianceWarning, SchemaError
from .schemas import AGD_SCHEMA, SCHEMA_VERSION

TRIAL_IDS = ("AC", "BC")
ANCHOR = "C"
ACTIVE_ARM = {"AC": "A", "BC": "B"}
KINDS = ("binary", "continuous")

# The worked example reports the rate of Y=0, so Y=0 is the default event.
DEFAULT_EVENT = 0


@dataclass(frozen=True)
class CovariateSpec:
    name: str
    kind: str = "binary"
    index: int = 0

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind}


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    covariates: np.ndarray
    arm: str
    outcome: float


@dataclass(frozen=True)
class Violation:
    """One broken invariant; ``record`` is a subject id or None for trial-level issues."""

    invariant: str
    message: str
    record: str | None = None

    def __str__(self) -> str:
        where = f"record {self.record}: " if self.record is not None else ""
        return f"[{self.invariant}] {where}{self.message}"


def make_specs(names: Sequence[str], kinds: Sequence[str] | None = None) -> tuple[CovariateSpec, ...]:
    kinds = list(kinds) if kinds is not None else ["binary"] * len(names)
    if len(kinds) != len(names):
        raise ValueError("names and kinds differ in length")
    return tuple(CovariateSpec(n, k, i) for i, (n, k) in enumerate(zip(names, kinds)))


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class IpdTrial:
    """Individual participant data for one two-arm trial.

    Parameters
    ----------
    trial_id : {"AC", "BC"}
        Trial membership; the AC trial is coded T=1 in propensity models.
    subject_ids : sequence of str
    arms : sequence of str
        Arm label per subject, one of ``arm_labels``.
    outcomes : array_like
        Binary 0/1 or real outcomes.
    covariates : array_like, shape (n, p)
        Binary covariates are coded 0/1.
    covariate_specs : tuple of CovariateSpec
    arm_labels : (active, anchor)
        Defaults to ("A", "C") for AC and ("B", "C") for BC.
    outcome_type : {"binary", "continuous"}
    event : int
        Outcome value counted as the event in binary contrasts.
    declared_n : int, optional
        Expected record count; checked by :func:`validate_trial`.
    """

    trial_id: str
    subject_ids: tuple
    arms: np.ndarray
    outcomes: np.ndarray
    covariates: np.ndarray
    covariate_specs: tuple
    arm_labels: tuple = None
    outcome_type: str = "binary"
    event: int = DEFAULT_EVENT
    declared_n: int | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "subject_ids", tuple(str(s) for s in self.subject_ids))
        set_(self, "arms", _frozen(self.arms, dtype=object))
        set_(self, "outcomes", _frozen(self.outcomes))
        cov = np.array(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(-1, len(self.covariate_specs) or 1)
        set_(self, "covariates", _frozen(cov))
        set_(self, "covariate_specs", tuple(self.covariate_specs))
        if self.arm_labels is None:
            set_(self, "arm_labels", (ACTIVE_ARM.get(self.trial_id, "?"), ANCHOR))
        else:
            set_(self, "arm_labels", tuple(self.arm_labels))

    @classmethod
    def from_records(cls, trial_id: str, records: Sequence[SubjectRecord], covariate_specs, **kw) -> IpdTrial:
        p = len(covariate_specs)
        return cls(
            trial_id=trial_id,
            subject_ids=[r.subject_id for r in records],
            arms=[r.arm for r in records],
            outcomes=[r.outcome for r in records],
            covariates=np.array([r.covariates for r in records], dtype=float).reshape(-1, p),
            covariate_specs=covariate_specs,
            **kw,
        )

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.covariate_specs)

    @property
    def active(self) -> str:
        return self.arm_labels[0]

    @property
    def anchor(self) -> str:
        return self.arm_labels[1]

    @property
    def treated(self) -> np.ndarray:
        """1.0 for the active arm, 0.0 for the anchor arm."""
        return (self.arms == self.active).astype(float)

    def event_indicator(self, event: int | None = None) -> np.ndarray:
        event = self.event if event is None else event
        return (self.outcomes == event).astype(float)

    def records(self) -> Iterator[SubjectRecord]:
        for i, sid in enumerate(self.subject_ids):
            yield SubjectRecord(sid, self.covariates[i], self.arms[i], float(self.outcomes[i]))

    def subset(self, idx) -> IpdTrial:
        idx = np.asarray(idx)
        return IpdTrial(
            trial_id=self.trial_id,
            subject_ids=np.asarray(self.subject_ids, dtype=object)[idx],
            arms=self.arms[idx],
            outcomes=self.outcomes[idx],
            covariates=self.covariates[idx],
            covariate_specs=self.covariate_specs,
            arm_labels=self.arm_labels,
            outcome_type=self.outcome_type,
            event=self.event,
        )

    def relabel(self, trial_id: str, active: str) -> IpdTrial:
        """Copy with a new trial id and active-arm label (used for role-swap checks)."""
        return IpdTrial(
            trial_id=trial_id,
            subject_ids=self.subject_ids,
            arms=np.where(self.arms == self.active, active, self.arms),
            outcomes=self.outcomes,
            covariates=self.covariates,
            covariate_specs=self.covariate_specs,
            arm_labels=(active, self.anchor),
            outcome_type=self.outcome_type,
            event=self.event,
            declared_n=self.declared_n,
        )


@dataclass(frozen=True)
class ArmOutcome:
    """Per-arm outcome summary: event counts for binary, mean/SD for continuous."""

    n: int
    events: int | None = None
    nonevents: int | None = None
    mean: float | None = None
    sd: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class PublishedEffect:
    scale: str
    point: float
    se: float | None = None


@dataclass(frozen=True, eq=False)
class AgdSummary:
    trial_id: str
    arm_labels: tuple
    arm_sizes: dict
    covariate_specs: tuple
    covariate_means: np.ndarray
    covariate_cov: np.ndarray | None = None
    outcomes: dict | None = None
    published: PublishedEffect | None = None
    event: int = DEFAULT_EVENT
    covariance_omitted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "covariate_means", _frozen(self.covariate_means))
        if self.covariate_cov is not None:
            object.__setattr__(self, "covariate_cov", _frozen(self.covariate_cov))
        object.__setattr__(self, "arm_labels", tuple(self.arm_labels))
        object.__setattr__(self, "covariate_specs", tuple(self.covariate_specs))

    @property
    def n(self) -> int:
        return int(sum(self.arm_sizes.values()))

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.covariate_specs)

    def mean_of(self, name: str) -> float:
        return float(self.covariate_means[self.covariate_names.index(name)])

    def to_dict(self) -> dict:
        doc = {
            "schema": SCHEMA_VERSION,
            "kind": "agd",
            "trial_id": self.trial_id,
            "arm_labels": list(self.arm_labels),
            "arm_sizes": {k: int(v) for k, v in self.arm_sizes.items()},
            "covariates": [s.to_dict() for s in self.covariate_specs],
            "covariate_means": [float(m) for m in self.covariate_means],
            "covariate_covariance": None if self.covariate_cov is None else self.covariate_cov.tolist(),
            "outcomes": None if self.outcomes is None else {k: v.to_dict() for k, v in self.outcomes.items()},
            "event": self.event,
            "published_effect": None if self.published is None else dict(self.published.__dict__),
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> AgdSummary:
        try:
            jsonschema.validate(doc, AGD_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"AgD document: {exc.message}") from None
        specs = make_specs([c["name"] for c in doc["covariates"]], [c["kind"] for c in doc["covariates"]])
        cov = doc.get("covariate_covariance")
        outcomes = doc.get("outcomes")
        pub = doc.get("published_effect")
        agd = cls(
            trial_id=doc["trial_id"],
            arm_labels=tuple(doc["arm_labels"]),
            arm_sizes=dict(doc["arm_sizes"]),
            covariate_specs=specs,
            covariate_means=doc["covariate_means"],
            covariate_cov=None if cov is None else np.array(cov, dtype=float),
            outcomes=None if outcomes is None else {k: ArmOutcome(**v) for k, v in outcomes.items()},
            published=None if pub is None else PublishedEffect(**pub),
            event=doc.get("event", DEFAULT_EVENT),
        )
        problems = agd_violations(agd)
        if problems:
            raise SchemaError("; ".join(str(v) for v in problems))
        return agd


def validate_trial(trial: IpdTrial) -> list[Violation]:
    """Check every IpdTrial invariant; an empty list means the trial is valid."""
    out: list[Violation] = []
    names = trial.covariate_names
    if len(set(names)) != len(names):
        out.append(Violation("unique-covariate-names", f"duplicate covariate names in {names}"))
    for i, spec in enumerate(trial.covariate_specs):
        if spec.kind not in KINDS:
            out.append(Violation("covariate-kind", f"{spec.name}: unknown kind {spec.kind!r}"))
        if spec.index != i:
            out.append(Violation("covariate-order", f"{spec.name}: index {spec.index} at position {i}"))
    if trial.trial_id not in TRIAL_IDS:
        out.append(Violation("trial-id", f"trial id {trial.trial_id!r} not in {TRIAL_IDS}"))
    if len(set(trial.arm_labels)) != 2:
        out.append(Violation("arm-labels", f"arm labels {trial.arm_labels} must be two distinct labels"))
    n = trial.n
    if not (len(trial.arms) == len(trial.outcomes) == trial.covariates.shape[0] == n):
        out.append(Violation("shape", "subject ids, arms, outcomes and covariates differ in length"))
        return out
    if trial.covariates.shape[1] != len(names):
        out.append(Violation("shape", f"{trial.covariates.shape[1]} covariate columns for {len(names)} specs"))
        return out
    if len(set(trial.subject_ids)) != n:
        out.append(Violation("unique-subject-ids", "subject ids are not unique"))
    if trial.declared_n is not None and trial.declared_n != n:
        out.append(Violation("record-count", f"{n} records but n={trial.declared_n} declared"))

    binary_cols = [s.index for s in trial.covariate_specs if s.kind == "binary"]
    for i, sid in enumerate(trial.subject_ids):
        arm = trial.arms[i]
        if arm not in trial.arm_labels:
            out.append(Violation("declared-arm", f"arm {arm!r} not in {trial.arm_labels}", sid))
        x = trial.covariates[i]
        if not np.all(np.isfinite(x)):
            out.append(Violation("finite-covariate", "non-finite covariate value", sid))
        for j in binary_cols:
            if x[j] not in (0.0, 1.0):
                out.append(Violation("binary-coding", f"{names[j]}={x[j]!r} is not 0/1", sid))
        y = trial.outcomes[i]
        if trial.outcome_type == "binary" and y not in (0.0, 1.0):
            out.append(Violation("outcome-type", f"outcome {y!r} is not 0/1 in a binary trial", sid))
        elif not np.isfinite(y):
            out.append(Violation("outcome-type", "non-finite outcome", sid))
    for arm in trial.arm_labels:
        if not np.any(trial.arms == arm):
            out.append(Violation("arm-nonempty", f"no records in arm {arm!r}"))
    return out


def summarize_ipd(trial: IpdTrial) -> AgdSummary:
    """Collapse IPD to the aggregate summary a sponsor would publish.

    Covariance uses the n-1 denominator and is omitted (with a
    ``CovarianceWarning``) when fewer than two records exist.
    """
    X = trial.covariates
    means = X.mean(axis=0)
    cov, omitted = None, False
    if trial.n >= 2:
        cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    else:
        omitted = True
        warnings.warn("covariance needs at least two records; omitted", CovarianceWarning, stacklevel=2)
    sizes, outcomes = {}, {}
    for arm in trial.arm_labels:
        mask = trial.arms == arm
        k = int(mask.sum())
        sizes[arm] = k
        y = trial.outcomes[mask]
        if trial.outcome_type == "binary":
            ev = int(np.sum(y == trial.event))
            outcomes[arm] = ArmOutcome(n=k, events=ev, nonevents=k - ev)
        else:
            sd = float(np.std(y, ddof=1)) if k >= 2 else None
            outcomes[arm] = ArmOutcome(n=k, mean=float(y.mean()) if k else None, sd=sd)
    return AgdSummary(
        trial_id=trial.trial_id,
        arm_labels=trial.arm_labels,
        arm_sizes=sizes,
        covariate_specs=trial.covariate_specs,
        covariate_means=means,
        covariate_cov=cov,
        outcomes=outcomes,
        event=trial.event,
        covariance_omitted=omitted,
    )


def agd_violations(agd: AgdSummary) -> list[Violation]:
    out: list[Violation] = []
    p = len(agd.covariate_specs)
    if agd.covariate_means.shape != (p,):
        out.append(Violation("shape", f"{agd.covariate_means.size} means for {p} covariates"))
        return out
    for spec, m in zip(agd.covariate_specs, agd.covariate_means):
        if not np.isfinite(m):
            out.append(Violation("finite-mean", f"{spec.name}: non-finite mean"))
        elif spec.kind == "binary" and not 0.0 <= m <= 1.0:
            out.append(Violation("proportion-range", f"{spec.name}: proportion {m} outside [0, 1]"))
    for arm, k in agd.arm_sizes.items():
        if k < 0:
            out.append(Violation("arm-size", f"arm {arm}: negative size {k}"))
    if agd.covariate_cov is not None:
        S = agd.covariate_cov
        if S.shape != (p, p):
            out.append(Violation("covariance-shape", f"covariance shape {S.shape}, expected {(p, p)}"))
        elif not np.allclose(S, S.T, atol=1e-12):
            out.append(Violation("covariance-symmetric", "covariance is not symmetric"))
        elif np.linalg.eigvalsh(S).min() < -1e-9 * max(1.0, np.abs(S).max()):
            out.append(Violation("covariance-psd", "covariance is not positive semidefinite"))
    for arm, o in (agd.outcomes or {}).items():
        if o.events is not None:
            if o.events < 0 or (o.nonevents or 0) < 0:
                out.append(Violation("outcome-counts", f"arm {arm}: negative counts"))
            elif o.events + (o.nonevents or 0) != o.n:
                out.append(Violation("outcome-counts", f"arm {arm}: counts do not sum to {o.n}"))
        if arm in agd.arm_sizes and o.n != agd.arm_sizes[arm]:
            out.append(Violation("outcome-counts", f"arm {arm}: outcome n {o.n} != arm size"))
    return out


# -- files --------------------------------------------------------------------

def _infer_kind(col: np.ndarray) -> str:
    return "binary" if np.all((col == 0) | (col == 1)) else "continuous"


def read_ipd_csv(
    path,
    trial_id: str | None = None,
    kinds: dict | None = None,
    event: int = DEFAULT_EVENT,
) -> IpdTrial:
    """Load an IPD CSV. Covariate kinds default to "binary" for 0/1 columns.

    The ``arm`` and ``outcome`` columns may be absent for covariate-only
    extracts (the file an arbitrator receives); they are then filled with
    placeholders and the result is only meaningful for its covariates.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "subject_id" not in header:
            raise SchemaError(f"{path}: missing subject_id column")
        rows = list(reader)
    cov_names = [h for h in header if h not in ("subject_id", "arm", "outcome")]
    try:
        X = np.array([[float(r[c]) for c in cov_names] for r in rows], dtype=float).reshape(len(rows), len(cov_names))
        y = np.array([float(r["outcome"]) if "outcome" in header else np.nan for r in rows])
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    arms = [r.get("arm", "?") for r in rows]
    if trial_id is None:
        present = set(arms)
        trial_id = "AC" if "A" in present else "BC" if "B" in present else None
        if trial_id is None:
            raise SchemaError(f"{path}: cannot infer trial id from arms {sorted(present)}")
    kinds = kinds or {}
    specs = make_specs(cov_names, [kinds.get(c) or _infer_kind(X[:, j]) for j, c in enumerate(cov_names)])
    finite = y[np.isfinite(y)]
    otype = "binary" if finite.size == 0 or np.all((finite == 0) | (finite == 1)) else "continuous"
    return IpdTrial(
        trial_id=trial_id,
        subject_ids=[r["subject_id"] for r in rows],
        arms=arms,
        outcomes=y,
        covariates=X,
        covariate_specs=specs,
        outcome_type=otype,
        event=event,
    )


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_ipd_csv(trial: IpdTrial, path, covariates_only: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        lead = ["subject_id"] if covariates_only else ["subject_id", "arm", "outcome"]
        w.writerow(lead + list(trial.covariate_names))
        for i, sid in enumerate(trial.subject_ids):
            row = [sid] if covariates_only else [sid, trial.arms[i], _fmt(trial.outcomes[i])]
            w.writerow(row + [_fmt(v) for v in trial.covariates[i]])


def read_agd_json(path) -> AgdSummary:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return AgdSummary.from_dict(doc)


def write_agd_json(agd: AgdSummary, path) -> None:
    Path(path).write_text(json.dumps(agd.to_dict(), indent=2) + "\n")


# -- the worked example ---------------------------------------------------------

# (race, arm, outcome) -> count for the worked example; race 1 = Black.
WORKED_EXAMPLE_COUNTS = {
    "AC": {
        (1, "A", 0): 180, (1, "A", 1): 20, (1, "C", 0): 80, (1, "C", 1): 120,
        (0, "A", 0): 80, (0, "A", 1): 320, (0, "C", 0): 40, (0, "C", 1): 360,
    },
    "BC": {
        (1, "B", 0): 240, (1, "B", 1): 160, (1, "C", 0): 160, (1, "C", 1): 240,
        (0, "B", 0): 100, (0, "B", 1): 100, (0, "C", 0): 20, (0, "C", 1): 180,
    },
}


def trial_from_counts(trial_id: str, counts: dict, covariate: str = "black") -> IpdTrial:
    """Expand a {(x, arm, y): count} table into subject-level IPD."""
    ids, arms, ys, xs = [], [], [], []
    for (x, arm, y), k in counts.items():
        for _ in range(k):
            ids.append(f"{trial_id}-{len(ids) + 1:05d}")
            arms.append(arm)
            ys.append(y)
            xs.append([x])
    return IpdTrial(
        trial_id=trial_id,
        subject_ids=ids,
        arms=arms,
        outcomes=ys,
        covariates=xs,
        covariate_specs=make_specs([covariate]),
        declared_n=sum(counts.values()),
    )


def worked_example_trials() -> tuple[IpdTrial, IpdTrial]:
    return trial_from_counts("AC", WORKED_EXAMPLE_COUNTS["AC"]), trial_from_counts("BC", WORKED_EXAMPLE_COUNTS["BC"])


def fixture_dir() -> Path:
    return Path(__file__).parent / "data"


def load_worked_example(directory=None) -> dict:
    """Read the bundled worked-example files: both IPD CSVs and both AgD documents."""
    d = Path(directory) if directory is not None else fixture_dir()
    return {
        "ac_ipd": read_ipd_csv(d / "example_ac.csv", "AC"),
        "bc_ipd": read_ipd_csv(d / "example_bc.csv", "BC"),
        "ac_agd": read_agd_json(d / "example_ac_agd.json"),
        "bc_agd": read_agd_json(d / "example_bc_agd.json"),
    }
