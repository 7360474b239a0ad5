import pytest

from studyspec.errors import SessionError
from studyspec.runtime import DONE, TrialRecord, grade, normalize_scalar, replay, start_session
from studyspec.sequencer import RealizedSequence, realize_sequence
from studyspec.config import ComponentDef, ResponseDef
from studyspec.staircase import StaircaseState

from conftest import compiled

Q = {"compType": "form", "responses": [{"id": "ans", "kind": "radio"}], "correctAnswers": {"ans": "B"}}


def toy_study(threshold=2):
    components = {"intro": {"compType": "markdown"}, "q1": Q, "q2": Q, "q3": Q, "debrief": {"compType": "markdown"}}
    seq = {
        "order": "fixed",
        "components": [
            "intro",
            {"order": "fixed", "id": "training", "components": ["q1", "q2", "q3"],
             "skip": [{"variant": "blockCondition", "blockId": "training", "check": "numIncorrect",
                       "threshold": threshold, "target": "debrief"}]},
            "debrief",
        ],
    }
    return compiled(seq, components)


def walk(session, answers):
    served = []
    t = 0
    for ans in answers:
        item = session.next_component()
        served.append(item.componentName)
        session.submit_answer(ans, t, t + 10)
        t += 10
    return served


def test_linear_walk():
    cfg = compiled({"order": "fixed", "components": ["a", "b", "c"]})
    session = start_session(cfg, realize_sequence(cfg, 0, 0))
    assert session.cursor == 0 and session.status == "active"
    assert walk(session, [{}, {}, {}]) == ["a", "b", "c"]
    assert session.next_component() is DONE
    assert (session.status, session.endReason) == ("ended", "finished")
    with pytest.raises(SessionError) as exc:
        session.next_component()
    assert exc.value.code == "E_SESSION_ENDED"


def test_empty_sequence_ends_immediately():
    cfg = compiled({"order": "fixed", "components": ["a"], "numSamples": 1})
    empty = RealizedSequence([], 0, 0, {})
    session = start_session(cfg, empty)
    assert (session.status, session.endReason) == ("ended", "finished")


def test_next_component_is_idempotent_until_answered():
    cfg = compiled({"order": "fixed", "components": ["a", "b"]})
    session = start_session(cfg, realize_sequence(cfg, 0, 0))
    assert session.next_component() == session.next_component()


def test_grading_exact_equality():
    session = start_session(toy_study(), realize_sequence(toy_study(), 0, 0))
    walk(session, [{}])
    session.next_component()
    assert session.submit_answer({"ans": "B"}, 0, 1).correct is True
    session.next_component()
    assert session.submit_answer({"ans": "b"}, 1, 2).correct is False


def test_ungraded_component_has_no_correctness():
    cfg = compiled({"order": "fixed", "components": ["a"]})
    session = start_session(cfg, realize_sequence(cfg, 0, 0))
    session.next_component()
    assert session.submit_answer({}, 0, 1).correct is None


def test_numeric_grading_uses_exact_decimal_normalization():
    comp = ComponentDef(compType="form", responses=(ResponseDef("n", "numerical"),), correctAnswers={"n": 2.5})
    assert grade(comp, {"n": "2.50"}) is True
    assert grade(comp, {"n": 2.5000000001}) is False
    assert normalize_scalar("1.10", numeric=True) == normalize_scalar(1.1, numeric=True)


def test_skip_after_second_wrong_answer():
    cfg = toy_study()
    session = start_session(cfg, realize_sequence(cfg, 0, 0))
    # hand trace: intro, q1 wrong, q2 right, q3 wrong -> debrief
    served = walk(session, [{}, {"ans": "A"}, {"ans": "B"}, {"ans": "C"}])
    assert served == ["intro", "q1", "q2", "q3"]
    assert session.next_component().componentName == "debrief"
    cfg_early = toy_study()
    session = start_session(cfg_early, realize_sequence(cfg_early, 0, 0))
    walk(session, [{}, {"ans": "A"}, {"ans": "A"}])
    assert session.next_component().componentName == "debrief"
    assert [r.componentName for r in session.answers] == ["intro", "q1", "q2"]


def test_below_threshold_no_skip():
    cfg = toy_study()
    session = start_session(cfg, realize_sequence(cfg, 0, 0))
    walk(session, [{}, {"ans": "A"}])
    assert session.evaluate_skip(session.answers[-1]) is None
    assert session.next_component().componentName == "q2"


def test_missing_required_leaves_session_unchanged():
    cfg = toy_study()
    session = start_session(cfg, realize_sequence(cfg, 0, 0))
    walk(session, [{}])
    served = session.next_component()
    with pytest.raises(SessionError) as exc:
        session.submit_answer({}, 0, 1)
    assert exc.value.code == "E_MISSING_REQUIRED"
    assert len(session.answers) == 1
    assert session.next_component() == served


def test_submit_without_pending():
    cfg = toy_study()
    session = start_session(cfg, realize_sequence(cfg, 0, 0))
    with pytest.raises(SessionError) as exc:
        session.submit_answer({}, 0, 1)
    assert exc.value.code == "E_NO_PENDING"


def test_response_condition_jumps_to_end(staircase_study):
    session = start_session(staircase_study, realize_sequence(staircase_study, 0, 0))
    assert session.next_component().componentName == "consent"
    session.submit_answer({"agree": "no-consent"}, 0, 5)
    assert (session.status, session.endReason) == ("ended", "skippedToEnd")


def test_inner_condition_wins():
    components = {"a": Q, "inner_t": {"compType": "markdown"}, "other": {"compType": "markdown"}}
    cond = lambda bid, target: {"variant": "blockCondition", "blockId": bid, "check": "numIncorrect",
                               "threshold": 1, "target": target}
    seq = {
        "order": "fixed", "id": "outer", "skip": [cond("outer", "end")],
        "components": [
            {"order": "fixed", "id": "inner", "components": ["a"], "skip": [cond("inner", "inner_t")]},
            "other", "inner_t",
        ],
    }
    cfg = compiled(seq, components)
    session = start_session(cfg, realize_sequence(cfg, 0, 0))
    session.next_component()
    session.submit_answer({"ans": "wrong"}, 0, 1)
    assert session.active
    assert session.next_component().componentName == "inner_t"


def test_staircase_block_first_trial(staircase_study):
    session = start_session(staircase_study, realize_sequence(staircase_study, 0, 0))
    assert isinstance(session.dynamicStates["study/jnd"]["staircase"], StaircaseState)
    session.next_component()
    session.submit_answer({"agree": "yes"}, 0, 1)
    trial = session.next_component()
    assert trial.componentName == "trial"
    assert (trial.orderParams["r1"], trial.orderParams["r2"]) == (0.3, 0.4)
    assert trial.instanceId == "study/jnd#1"


def test_replay_reproduces_records(staircase_study):
    realized = realize_sequence(staircase_study, 0, 0)
    session = start_session(staircase_study, RealizedSequence.from_dict(realized.to_dict()))
    t = 0
    while session.active:
        served = session.next_component()
        if served is None:
            break
        if "correctSide" in served.orderParams:
            answer = {"choice": served.orderParams["correctSide"]}
        elif served.componentName == "consent":
            answer = {"agree": "yes"}
        else:
            answer = {}
        session.submit_answer(answer, t, t + 7)
        t += 7
    again = replay(staircase_study, realized, session.answers)
    assert [r.to_dict() for r in again.answers] == [r.to_dict() for r in session.answers]
    tampered = list(session.answers)
    tampered[1] = TrialRecord.from_dict({**tampered[1].to_dict(), "instanceId": "nope"})
    with pytest.raises(SessionError) as exc:
        replay(staircase_study, realized, tampered)
    assert exc.value.code == "E_REPLAY_DIVERGED"
