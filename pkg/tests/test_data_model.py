import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arbiter_itc.data_model import (AgdSummary, IpdTrial, SubjectRecord, agd_violations, make_specs,
                                    read_agd_json, read_ipd_csv, summarize_ipd, validate_trial,
                                    worked_example_trials, write_agd_json, write_ipd_csv)
from arbiter_itc.errors import CovarianceWarning, SchemaError

from conftest import random_trial


def test_worked_example_trials_validate(ac, bc):
    assert ac.n == 1200 and bc.n == 1200
    assert validate_trial(ac) == []
    assert validate_trial(bc) == []


def test_fixture_files_match_generated_counts(ac, bc):
    gac, gbc = worked_example_trials()
    for a, b in ((ac, gac), (bc, gbc)):
        assert a.subject_ids == b.subject_ids
        assert np.array_equal(a.covariates, b.covariates)
        assert np.array_equal(a.outcomes, b.outcomes)
        assert list(a.arms) == list(b.arms)


def test_wrong_arm_is_one_violation_naming_record(ac):
    arms = np.array(ac.arms, dtype=object)
    arms[5] = "B"
    bad = IpdTrial("AC", ac.subject_ids, arms, ac.outcomes, ac.covariates, ac.covariate_specs)
    v = validate_trial(bad)
    assert len(v) == 1
    assert v[0].invariant == "declared-arm" and v[0].record == ac.subject_ids[5]


def test_half_coded_binary_is_one_violation(ac):
    X = np.array(ac.covariates)
    X[7, 0] = 0.5
    bad = IpdTrial("AC", ac.subject_ids, ac.arms, ac.outcomes, X, ac.covariate_specs)
    v = validate_trial(bad)
    assert [x.invariant for x in v] == ["binary-coding"]
    assert v[0].record == ac.subject_ids[7]


def test_declared_count_and_empty_arm(ac):
    t = IpdTrial("AC", ac.subject_ids, ac.arms, ac.outcomes, ac.covariates, ac.covariate_specs, declared_n=1000)
    assert [v.invariant for v in validate_trial(t)] == ["record-count"]
    only_a = ac.subset(np.flatnonzero(ac.arms == "A"))
    assert "arm-nonempty" in [v.invariant for v in validate_trial(only_a)]


def test_summarize_worked_example(ac, bc):
    s = summarize_ipd(ac)
    assert s.covariate_means[0] == pytest.approx(1 / 3, abs=1e-15)
    assert s.arm_sizes == {"A": 600, "C": 600}
    assert s.outcomes["A"].events == 260  # Y=0 is the default event
    assert summarize_ipd(bc).covariate_means[0] == pytest.approx(2 / 3, abs=1e-15)
    assert agd_violations(s) == []


def test_summarize_single_record_arm_omits_covariance():
    t = IpdTrial("AC", ["s1"], ["A"], [1.0], [[1.0, 2.5]], make_specs(["b", "c"], ["binary", "continuous"]))
    with pytest.warns(CovarianceWarning):
        s = summarize_ipd(t)
    assert s.covariate_cov is None and s.covariance_omitted
    assert list(s.covariate_means) == [1.0, 2.5]


def test_covariance_uses_n_minus_one(ac):
    s = summarize_ipd(ac)
    p = 1 / 3
    assert s.covariate_cov[0, 0] == pytest.approx(p * (1 - p) * 1200 / 1199, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_summary_round_trip_and_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    t = random_trial(rng, n=int(rng.integers(4, 60)), p=3)
    s = summarize_ipd(t)
    assert agd_violations(s) == []
    AgdSummary.from_dict(json.loads(json.dumps(s.to_dict())))
    perm = rng.permutation(t.n)
    s2 = summarize_ipd(t.subset(perm))
    assert np.allclose(s.covariate_means, s2.covariate_means, atol=1e-14)
    assert np.allclose(s.covariate_cov, s2.covariate_cov, atol=1e-13)
    assert s.arm_sizes == s2.arm_sizes
    assert {k: v.events for k, v in s.outcomes.items()} == {k: v.events for k, v in s2.outcomes.items()}


def test_agd_schema_rejects_bad_proportion(example):
    doc = example["bc_agd"].to_dict()
    doc["covariate_means"] = [1.5]
    with pytest.raises(SchemaError):
        AgdSummary.from_dict(doc)
    doc = example["bc_agd"].to_dict()
    doc["outcomes"]["B"]["events"] += 1
    with pytest.raises(SchemaError):
        AgdSummary.from_dict(doc)


def test_agd_rejects_non_psd_covariance(example):
    doc = example["bc_agd"].to_dict()
    doc["covariate_covariance"] = [[-1.0]]
    with pytest.raises(SchemaError):
        AgdSummary.from_dict(doc)


def test_csv_and_json_round_trip(tmp_path, ac):
    write_ipd_csv(ac, tmp_path / "ac.csv")
    back = read_ipd_csv(tmp_path / "ac.csv")
    assert back.trial_id == "AC" and back.subject_ids == ac.subject_ids
    assert np.array_equal(back.covariates, ac.covariates)
    assert np.array_equal(back.outcomes, ac.outcomes)
    write_ipd_csv(ac, tmp_path / "cov.csv", covariates_only=True)
    cov = read_ipd_csv(tmp_path / "cov.csv", "AC")
    assert np.array_equal(cov.covariates, ac.covariates)
    s = summarize_ipd(ac)
    write_agd_json(s, tmp_path / "ac.json")
    s2 = read_agd_json(tmp_path / "ac.json")
    assert np.array_equal(s2.covariate_means, s.covariate_means)
    assert json.loads((tmp_path / "ac.json").read_text())["schema"] == "arbiter-itc/v1"


def test_csv_missing_subject_id(tmp_path):
    (tmp_path / "x.csv").write_text("arm,outcome,b\nA,1,0\n")
    with pytest.raises(SchemaError):
        read_ipd_csv(tmp_path / "x.csv")


def test_from_records_matches_columns(ac):
    recs = list(ac.records())[:10]
    assert isinstance(recs[0], SubjectRecord)
    t = IpdTrial.from_records("AC", recs, ac.covariate_specs)
    assert t.subject_ids == ac.subject_ids[:10]
    assert np.array_equal(t.covariates, ac.covariates[:10])
