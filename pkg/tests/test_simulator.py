import json

import pytest

from studyspec.errors import SimulationError
from studyspec.provenance import reconstruct_timeline, validate_log
from studyspec.rng import Stream
from studyspec.simulator import (
    ParticipantPolicy,
    coverage_stats,
    simulate_cohort,
    weber_observer_respond,
    weber_p_correct,
)
from studyspec.staircase import TrialSpec

from conftest import compiled

Q = {"compType": "form", "responses": [{"id": "ans", "kind": "radio"}], "correctAnswers": {"ans": "B"}}


def test_weber_calibration():
    assert weber_p_correct(0.12, 0.12, 0.04) == 0.75
    assert weber_p_correct(0.0, 0.12, 0.0001) == pytest.approx(0.5)
    assert 0.5 <= weber_p_correct(0.0, 0.12, 0.04) < weber_p_correct(0.2, 0.12, 0.04) < 1.0


def test_weber_monte_carlo_at_jnd75():
    policy = ParticipantPolicy("weberObserver", jnd75=0.12, slope=0.04)
    trial = TrialSpec(0.3, 0.42, "left", False, 1, 0.12)
    rng = Stream(17)
    hits = sum(weber_observer_respond(trial, policy, rng)["correct"] for _ in range(100_000))
    assert abs(hits / 100_000 - 0.75) <= 0.005


def test_attention_lapse_rate():
    policy = ParticipantPolicy("weberObserver")
    trial = TrialSpec(0.01, 1.0, "right", True, 10)
    rng = Stream(2)
    hits = sum(weber_observer_respond(trial, policy, rng)["correct"] for _ in range(20_000))
    assert abs(hits / 20_000 - 0.995) < 0.003


def test_oracle_cohort_all_correct():
    cfg = compiled({"order": "fixed", "components": ["q1", "q2", "q3"]}, {"q1": Q, "q2": Q, "q3": Q})
    cohort = simulate_cohort(cfg, 5, ParticipantPolicy("oracle"), seed=0)
    assert cohort.outcomes() == {"completed": 5, "abandoned": 0, "excluded": 0}
    assert all(p.allCorrect for p in cohort.participants)


def test_zero_completions_zero_table(latin3):
    cohort = simulate_cohort(latin3, 0, ParticipantPolicy("oracle"), seed=0)
    assert coverage_stats(cohort)["root/conds"] == [[0] * 3 for _ in range(3)]


def test_random_block_coverage_concentration():
    cfg = compiled({"order": "random", "components": ["a", "b", "c"]})
    cohort = simulate_cohort(cfg, 600, ParticipantPolicy("oracle"), seed=3, inter_arrival_ms=10_000)
    table = coverage_stats(cohort)["root"]
    assert all(160 <= cell <= 240 for row in table for cell in row)
    assert all(sum(row) == 600 for row in table)


def test_always_left_is_excluded(staircase_study):
    cohort = simulate_cohort(staircase_study, 3, ParticipantPolicy("alwaysLeft"), seed=0)
    assert cohort.outcomes()["excluded"] == 3
    assert all(p.attentionPassRate == 0.0 for p in cohort.participants)


def test_attempt_cap(latin3):
    with pytest.raises(SimulationError) as exc:
        simulate_cohort(latin3, 4, ParticipantPolicy("oracle", abandonProb=1.0), seed=0)
    assert exc.value.code == "E_ATTEMPT_CAP"
    assert len(exc.value.result.participants) == 16


def test_outcomes_sum_to_attempts(latin3):
    cohort = simulate_cohort(latin3, 12, ParticipantPolicy("oracle", abandonProb=0.4), seed=5)
    assert sum(cohort.outcomes().values()) == len(cohort.participants)
    assert cohort.outcomes()["completed"] == 12
    assert all(e["conservation"] for e in cohort.poolLog)


def test_deterministic(latin3):
    policy = ParticipantPolicy("uniformRandom", abandonProb=0.3, seed=2)
    a = simulate_cohort(latin3, 9, policy, seed=7)
    b = simulate_cohort(latin3, 9, policy, seed=7)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    c = simulate_cohort(latin3, 9, policy, seed=8)
    assert json.dumps(a.to_dict(), sort_keys=True) != json.dumps(c.to_dict(), sort_keys=True)


def test_emitted_logs_replay(staircase_study):
    cohort = simulate_cohort(staircase_study, 2, ParticipantPolicy("weberObserver"), seed=1, emit_logs=True)
    for pid, events in cohort.logs.items():
        assert validate_log(events).replayable
        tl = reconstruct_timeline(events)
        assert [i.instanceId for i in tl.intervals] == [r["instanceId"] for r in cohort.trialRecords[pid]]
