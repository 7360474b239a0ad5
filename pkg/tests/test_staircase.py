import mpmath
import numpy as np
import pytest

from studyspec.errors import StaircaseError
from studyspec.rng import Stream
from studyspec.staircase import (
    StaircaseParams,
    Stop,
    check_convergence,
    estimate_jnd,
    should_exclude,
    staircase_init,
    staircase_next,
    trend_f_statistic,
)


def params(**kw):
    return StaircaseParams(**{"baseR": 0.3, **kw})


def answer(state, trial, correct, side=None):
    side = side or (trial.correctSide if correct else ("left" if trial.correctSide == "right" else "right"))
    return staircase_next(state, {"selectedSide": side, "correct": correct})


def test_defaults_match_published_procedure():
    p = params()
    assert (p.stepDown, p.stepUp, p.windowSize, p.maxTrials, p.attentionEvery) == (0.01, 0.03, 24, 50, 10)
    assert p.attentionPair == (0.01, 1.0)


def test_first_trial_pair():
    trial = staircase_next(staircase_init(params(startDiff=0.1), 0))
    assert (trial.r1, trial.r2, trial.isAttentionCheck, trial.trialIndex) == (0.3, 0.4, False, 1)


def test_below_approach_pair():
    trial = staircase_next(staircase_init(params(baseR=0.6, approach="below"), 0))
    assert (trial.r1, trial.r2) == (0.6, 0.5)


def test_clamped_start():
    state = staircase_init(params(baseR=0.9, startDiff=0.2), 0)
    trial = staircase_next(state)
    assert trial.r2 == 1.0
    assert trial.diff == pytest.approx(0.1)


@pytest.mark.parametrize("kw", [{"stepDown": 0.03, "stepUp": 0.03}, {"stepDown": 0.05}, {"baseR": 1.2},
                                {"windowSize": 60}, {"startDiff": 0.005}, {"approach": "sideways"}])
def test_bad_params(kw):
    with pytest.raises(StaircaseError) as exc:
        staircase_init(params(**kw), 0)
    assert exc.value.code == "E_BAD_PARAMS"


@pytest.mark.parametrize("correct, expected", [(True, 0.04), (False, 0.08)])
def test_step_sizes(correct, expected):
    state = staircase_init(params(), 0)
    state.currentDiff = 0.05
    trial = staircase_next(state)
    nxt = answer(state, trial, correct)
    assert nxt.diff == pytest.approx(expected, abs=1e-12)


def test_diff_floor_and_ceiling():
    state = staircase_init(params(baseR=0.95, startDiff=0.04), 0)
    trial = staircase_next(state)
    for _ in range(8):
        if trial.isAttentionCheck:
            trial = answer(state, trial, True)
            continue
        trial = answer(state, trial, False)
        assert trial.isAttentionCheck or trial.diff <= 0.05 + 1e-12
        assert 0 <= trial.r2 <= 1


def test_attention_check_reverses_last_side():
    state = staircase_init(params(), 0)
    trial = staircase_next(state)
    while trial.trialIndex < 9:
        trial = answer(state, trial, True)
    trial = answer(state, trial, True, side="left") if trial.correctSide == "left" else answer(state, trial, False, side="left")
    assert trial.trialIndex == 10 and trial.isAttentionCheck
    assert (trial.r1, trial.r2, trial.correctSide) == (0.01, 1.0, "right")
    before = state.currentDiff
    answer(state, trial, True)
    assert state.currentDiff == before
    assert state.attentionLedger == [{"trialIndex": 10, "passed": True}]


def test_forced_cap():
    state = staircase_init(params(maxTrials=30, windowSize=24, convergenceAlpha=0.999999), 0)
    trial = staircase_next(state)
    while not isinstance(trial, Stop):
        trial = answer(state, trial, True)
    assert trial.reason == "capped"
    assert len(state.history) == 30
    with pytest.raises(StaircaseError) as exc:
        staircase_next(state, None)
    assert exc.value.code == "E_TERMINATED"


def test_missing_response():
    state = staircase_init(params(), 0)
    staircase_next(state)
    with pytest.raises(StaircaseError) as exc:
        staircase_next(state, None)
    assert exc.value.code == "E_NO_RESPONSE"


def test_flat_window_converges():
    assert check_convergence([0.12] * 24, 0.05)


def test_ramp_does_not_converge():
    ramp = [round(0.30 - 0.01 * i, 2) for i in range(24)]
    assert ramp[-1] == 0.07
    assert not check_convergence(ramp, 0.05)


def test_short_window():
    with pytest.raises(StaircaseError) as exc:
        check_convergence([0.1, 0.2], 0.05)
    assert exc.value.code == "E_SHORT_WINDOW"


def _oracle_f_and_p(values):
    w = len(values)
    x = np.column_stack([np.ones(w), np.arange(1, w + 1)])
    y = np.asarray(values, dtype=float)
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    f = (ss_tot - ss_res) / (ss_res / (w - 2))
    d2 = w - 2
    # F(1, d2) upper tail via the regularized incomplete beta
    p = mpmath.betainc(d2 / 2, 0.5, 0, d2 / (d2 + f), regularized=True)
    return f, float(p)


def test_f_statistic_matches_regression_oracle():
    stream = Stream(11)
    for _ in range(200):
        window = [round(0.05 + 0.2 * stream.random(), 2) for _ in range(24)]
        f_oracle, p_oracle = _oracle_f_and_p(window)
        assert trend_f_statistic(window) == pytest.approx(f_oracle, abs=1e-9, rel=1e-9)
        assert check_convergence(window, 0.05) == (p_oracle > 0.05)


def test_estimate_is_window_mean():
    state = staircase_init(params(), 0)
    state.history = [{"diff": 0.10, "correct": True}] * 12 + [{"diff": 0.14, "correct": True}] * 12
    state.terminated = "converged"
    assert estimate_jnd(state) == pytest.approx(0.12)
    state.history = [{"diff": 0.5, "correct": True}] * 5 + [{"diff": 0.12, "correct": True}] * 24
    assert estimate_jnd(state) == pytest.approx(0.12)


def test_estimate_before_termination():
    with pytest.raises(StaircaseError) as exc:
        estimate_jnd(staircase_init(params(), 0))
    assert exc.value.code == "E_NOT_TERMINATED"


@pytest.mark.parametrize("fails, total, excluded", [(1, 5, False), (2, 5, True), (0, 0, False), (1, 4, True)])
def test_exclusion_rule(fails, total, excluded):
    state = staircase_init(params(), 0)
    state.attentionLedger = [{"passed": i >= fails} for i in range(total)]
    assert should_exclude(state) is excluded


def test_deterministic_given_seed_and_responses():
    def run(seed):
        state = staircase_init(params(), seed)
        trial, out = staircase_next(state), []
        while not isinstance(trial, Stop):
            out.append(trial)
            trial = answer(state, trial, trial.trialIndex % 3 != 0)
        return out
    assert run(5) == run(5)
    assert [t.correctSide for t in run(5)] != [t.correctSide for t in run(6)]
