import json
import math

import numpy as np
import pytest

from arbiter_itc.data_model import fixture_dir, make_specs
from arbiter_itc.errors import SchemaError
from arbiter_itc.simharness import (METHODS, OutcomeModel, ScenarioSpec, paradox_scenario, run_replicate,
                                    run_study, simulate_pair, summarize_rows, true_effects, validate_report)


def test_outcome_model_reproduces_cell_probabilities():
    s = paradox_scenario()
    ac, bc = s.outcome_model["AC"], s.outcome_model["BC"]
    # P(Y=0) is the event probability: A-arm Black 180/200, C-arm Black 80/200, etc.
    assert ac.prob([[1.0]], 1.0)[0] == pytest.approx(0.9, abs=1e-12)
    assert ac.prob([[0.0]], 1.0)[0] == pytest.approx(0.2, abs=1e-12)
    assert ac.prob([[1.0]], 0.0)[0] == pytest.approx(0.4, abs=1e-12)
    assert bc.prob([[1.0]], 1.0)[0] == pytest.approx(0.6, abs=1e-12)
    assert bc.prob([[0.0]], 1.0)[0] == pytest.approx(0.5, abs=1e-12)
    assert bc.prob([[0.0]], 0.0)[0] == pytest.approx(0.1, abs=1e-12)


def test_large_n_cell_fractions():
    s = paradox_scenario(n_per_arm=200_000, replicates=1)
    ac, _ = simulate_pair(s, 0)
    black = ac.covariates[:, 0] == 1
    a = ac.arms == "A"
    assert np.mean(ac.outcomes[black & a] == 0) == pytest.approx(0.9, abs=0.005)
    assert black.mean() == pytest.approx(1 / 3, abs=0.005)


def test_simulate_pair_deterministic():
    s = paradox_scenario(replicates=3)
    a1, b1 = simulate_pair(s, 2)
    a2, b2 = simulate_pair(s, 2)
    assert np.array_equal(a1.outcomes, a2.outcomes) and np.array_equal(b1.covariates, b2.covariates)
    a3, _ = simulate_pair(s, 1)
    assert not np.array_equal(a1.outcomes, a3.outcomes)


def test_true_effects_paradox():
    t = true_effects(paradox_scenario())
    assert t["maic_sponsor_a"] == pytest.approx(0.4249, abs=1e-4)
    assert t["maic_sponsor_b"] == pytest.approx(-0.4018, abs=1e-4)
    assert t["arbitrated_ipd"] == pytest.approx(0.0, abs=1e-12)


def no_modification(prognostic=0.0, replicates=10):
    om = OutcomeModel(-0.5, (prognostic,), 1.0, (0.0,))
    return ScenarioSpec(300, make_specs(["black"]), {"AC": (0.3,), "BC": (0.7,)}, {"AC": om, "BC": om},
                        replicates, 3, name="no-modification")


def test_zero_interaction_targets_coincide():
    t = true_effects(no_modification())
    assert all(t[m] == pytest.approx(0.0, abs=1e-12) for m in METHODS)
    # with a prognostic term the marginal odds ratio is non-collapsible, yet A-vs-B within a
    # population still cancels because both trials share the outcome model
    t = true_effects(no_modification(prognostic=1.5))
    assert all(t[m] == pytest.approx(0.0, abs=1e-12) for m in METHODS)


def test_run_replicate_row_shape():
    row = run_replicate(paradox_scenario(replicates=1), 0)
    assert row["error"] is None
    for m in METHODS:
        point, se = row[m]
        assert math.isfinite(point) and se > 0
    assert row["arbitrated_simulation"][0] == pytest.approx(row["arbitrated_ipd"][0], abs=0.05)


def test_summary_is_permutation_invariant():
    spec = paradox_scenario(replicates=40)
    rows = [run_replicate(spec, i) for i in range(40)]
    a = summarize_rows(spec, rows).to_dict()
    b = summarize_rows(spec, list(np.random.default_rng(0).permutation(np.array(rows, dtype=object)))).to_dict()
    assert a == b
    validate_report(a)


def test_threads_do_not_change_report():
    spec = paradox_scenario(replicates=12)
    assert run_study(spec, threads=1).to_dict() == run_study(spec, threads=3).to_dict()


def test_abort_threshold():
    spec = paradox_scenario(replicates=200)
    good = run_replicate(spec, 0)
    rows = [dict(good, index=i) for i in range(198)]
    rows += [{"index": 198, "error": "boom"}, {"index": 199, "error": "boom"}]
    r = summarize_rows(spec, rows)
    assert r.aborted == 2 and not r.failed
    rows.append({"index": 200, "error": "boom"})
    assert summarize_rows(spec, rows).failed


def test_no_modification_all_methods_agree():
    spec = ScenarioSpec.load(fixture_dir() / "scenario_no_modification.json")
    r = run_study(spec, threads=2)
    assert r.aborted == 0 and r.all_methods_agree
    assert "all methods agree: True" in r.to_text()


def test_bias_shrinks_with_sample_size():
    rows = {}
    for n in (600, 2400, 9600):
        r = run_study(paradox_scenario(replicates=60, n_per_arm=n, seed=31), threads=2)
        rows[n] = r.methods["arbitrated_ipd"]
    for n, s in rows.items():
        assert abs(s["mean"] - s["truth"]) <= 3 * s["empirical_se"] / math.sqrt(60)
    ses = [rows[n]["empirical_se"] for n in (600, 2400, 9600)]
    assert ses[0] > ses[1] > ses[2]
    assert ses[0] / ses[2] == pytest.approx(4.0, rel=0.35)


def test_scenario_validation_and_round_trip(tmp_path):
    s = paradox_scenario(replicates=5)
    (tmp_path / "s.json").write_text(json.dumps(s.to_dict()))
    assert ScenarioSpec.load(tmp_path / "s.json") == s
    doc = s.to_dict()
    doc["replicates"] = 0
    with pytest.raises(SchemaError):
        ScenarioSpec.from_dict(doc)
    doc = s.to_dict()
    doc["trial_means"]["AC"] = [1.4]
    with pytest.raises(SchemaError):
        ScenarioSpec.from_dict(doc)
