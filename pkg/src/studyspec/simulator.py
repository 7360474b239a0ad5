"""Synthetic participants and cohort simulation on a virtual clock.

Participants arrive ``inter_arrival_ms`` apart. Each one takes Latin rows
from the block pools, walks the realized sequence under a response policy
and either finishes or abandons at a seeded point. Abandoned rows stay
assigned until a later arrival finds them older than the timeout and
returns them to the pool. Arrivals continue until ``n`` sessions have
finished or ``4 * n`` attempts have been made.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

from .config import ComponentDef, StudyConfig, iter_blocks
from .errors import SimulationError
from .latin import LatinPool
from .provenance import ProvenanceEvent
from .rng import Stream, derive_seed
from .runtime import Session
from .sequencer import realize_sequence
from .staircase import (
    StaircaseParams,
    Stop,
    TrialSpec,
    attention_failure_rate,
    estimate_jnd,
    should_exclude,
    staircase_init,
    staircase_next,
)

POLICY_KINDS = ("oracle", "uniformRandom", "weberObserver", "alwaysLeft")
ATTENTION_ACCURACY = 0.995


@dataclass(frozen=True)
class ParticipantPolicy:
    kind: str = "oracle"
    jnd75: float = 0.12
    slope: float = 0.04
    abandonProb: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.abandonProb <= 1.0:
            raise ValueError("abandonProb must lie in [0, 1]")
        if self.kind == "weberObserver" and (self.slope <= 0 or self.jnd75 < 0):
            raise ValueError("weber observer needs slope > 0 and jnd75 >= 0")


def weber_p_correct(d: float, jnd75: float, slope: float) -> float:
    """Logistic psychometric function with chance floor 0.5 and 0.75 at ``jnd75``."""
    x = (d - jnd75) / slope
    if x >= 0:
        logistic = 1.0 / (1.0 + math.exp(-x))
    else:
        e = math.exp(x)
        logistic = e / (1.0 + e)
    return 0.5 + 0.5 * logistic


def _other(side: str) -> str:
    return "right" if side == "left" else "left"


def _trial_fields(trial) -> tuple[float, float, str, bool]:
    if isinstance(trial, TrialSpec):
        return trial.r1, trial.r2, trial.correctSide, trial.isAttentionCheck
    return trial["r1"], trial["r2"], trial["correctSide"], bool(trial.get("isAttentionCheck"))


def weber_observer_respond(trial, policy: ParticipantPolicy, rng: Stream) -> dict:
    """``{selectedSide, correct}`` for a 2-AFC trial (TrialSpec or order params)."""
    r1, r2, correct_side, attention = _trial_fields(trial)
    if attention:
        p = ATTENTION_ACCURACY
    else:
        p = weber_p_correct(abs(r1 - r2), policy.jnd75, policy.slope)
    correct = rng.random() < p
    side = correct_side if correct else _other(correct_side)
    return {"selectedSide": side, "correct": correct}


def policy_choose_side(trial, policy: ParticipantPolicy, rng: Stream) -> str:
    _, _, correct_side, _ = _trial_fields(trial)
    if policy.kind == "oracle":
        return correct_side
    if policy.kind == "alwaysLeft":
        return "left"
    if policy.kind == "uniformRandom":
        return rng.choice(("left", "right"))
    return weber_observer_respond(trial, policy, rng)["selectedSide"]


def _default_value(resp, rng: Stream | None):
    options = resp.parameters.get("options")
    if isinstance(options, list) and options:
        if rng is None:
            return options[0]
        opt = rng.choice(options)
        return opt.get("value", opt.get("label")) if isinstance(opt, dict) else opt
    if resp.kind in ("numerical", "slider"):
        return rng.below(101) if rng else 0
    if resp.kind == "likert":
        size = int(resp.parameters.get("numItems", 5))
        return 1 + (rng.below(size) if rng else 0)
    return f"{resp.id}-answer-{rng.below(1000)}" if rng else f"{resp.id}-answer"


def policy_answer_static(component: ComponentDef | None, policy: ParticipantPolicy, rng: Stream) -> dict:
    """Responses for a non-adaptive component."""
    if component is None:
        return {}
    out = {}
    correct = component.correctAnswers or {}
    for resp in component.responses or ():
        if policy.kind == "uniformRandom":
            out[resp.id] = _default_value(resp, rng)
        elif policy.kind == "alwaysLeft":
            out[resp.id] = _default_value(resp, None)
        elif resp.id in correct:
            out[resp.id] = correct[resp.id]
        else:
            out[resp.id] = _default_value(resp, None)
    return out


# --------------------------------------------------------------------------
# single sessions
# --------------------------------------------------------------------------


@dataclass
class SessionRun:
    session: Session
    abandoned: bool
    startedAt: int
    endedAt: int
    events: list[ProvenanceEvent] = field(default_factory=list)


def run_session(
    config: StudyConfig,
    realized,
    policy: ParticipantPolicy,
    rng: Stream,
    start: int = 0,
    abandon_after: int | None = None,
    emit_events: bool = False,
) -> SessionRun:
    """Drive a session to its end (or to ``abandon_after`` answers)."""
    session = Session(config, realized)
    t = int(start)
    events: list[ProvenanceEvent] = []
    answered = 0
    abandoned = False
    while session.active:
        if abandon_after is not None and answered >= abandon_after:
            abandoned = True
            break
        served = session.next_component()
        if served is None:
            break
        duration = 1000 + rng.below(4000)
        params = served.orderParams
        if "correctSide" in params:
            side = policy_choose_side(params, policy, rng)
            responses = {params.get("responseId", "choice"): side}
        else:
            side = None
            responses = policy_answer_static(config.components.get(served.componentName), policy, rng)
        if emit_events:
            events.append(ProvenanceEvent(t, "componentStart", served.instanceId))
            hover_at = t + 100 + rng.below(200)
            item = side or "content"
            span = 200 + rng.below(max(1, duration - 600))
            events.append(ProvenanceEvent(hover_at, "hoverEnter", served.instanceId, item, {}, False))
            events.append(ProvenanceEvent(hover_at + span, "hoverExit", served.instanceId, item, {}, False))
            events.append(ProvenanceEvent(t + duration - 50, "click", served.instanceId, item))
            events.append(ProvenanceEvent(t + duration, "componentEnd", served.instanceId))
        session.submit_answer(responses, t, t + duration)
        t += duration
        answered += 1
    return SessionRun(session, abandoned, int(start), t, events)


# --------------------------------------------------------------------------
# stand-alone staircase runs
# --------------------------------------------------------------------------


@dataclass
class StaircaseRun:
    seed: int
    trials: int
    terminationReason: str
    jndEstimate: float
    attentionPassRate: float
    excluded: bool
    attentionPositions: list[int]
    diffs: list[float]

    def row(self) -> dict:
        return {
            "seed": self.seed,
            "trials": self.trials,
            "terminationReason": self.terminationReason,
            "jndEstimate": f"{self.jndEstimate:.6f}",
            "attentionPassRate": f"{self.attentionPassRate:.6f}",
            "excluded": str(self.excluded).lower(),
        }


def run_staircase(params: StaircaseParams, policy: ParticipantPolicy, seed: int) -> StaircaseRun:
    state = staircase_init(params, derive_seed("staircase-run", seed))
    rng = Stream.derived("observer", policy.seed, seed)
    last = None
    while True:
        trial = staircase_next(state, last)
        if isinstance(trial, Stop):
            break
        side = policy_choose_side(trial, policy, rng)
        last = {"selectedSide": side, "correct": side == trial.correctSide}
    return StaircaseRun(
        seed=seed,
        trials=state.trialIndex,
        terminationReason=state.terminated,
        jndEstimate=estimate_jnd(state),
        attentionPassRate=1.0 - attention_failure_rate(state) if state.attentionLedger else 1.0,
        excluded=should_exclude(state),
        attentionPositions=[a["trialIndex"] for a in state.attentionLedger],
        diffs=[h["diff"] for h in state.history],
    )


# --------------------------------------------------------------------------
# cohorts
# --------------------------------------------------------------------------


@dataclass
class ParticipantResult:
    participantId: str
    participantIndex: int
    sessionOutcome: str
    trials: int
    arrivedAt: int
    endedAt: int
    assignedRow: dict[str, list[int]] = field(default_factory=dict)
    blockOrders: dict[str, list[int]] = field(default_factory=dict)
    jndEstimate: float | None = None
    terminationReason: str | None = None
    attentionPassRate: float | None = None
    allCorrect: bool | None = None

    def to_dict(self) -> dict:
        return {
            "participantId": self.participantId,
            "participantIndex": self.participantIndex,
            "sessionOutcome": self.sessionOutcome,
            "trials": self.trials,
            "arrivedAt": self.arrivedAt,
            "endedAt": self.endedAt,
            "assignedRow": self.assignedRow,
            "blockOrders": self.blockOrders,
            "jndEstimate": self.jndEstimate,
            "terminationReason": self.terminationReason,
            "attentionPassRate": self.attentionPassRate,
            "allCorrect": self.allCorrect,
        }


@dataclass
class CohortResult:
    participants: list[ParticipantResult]
    pools: dict[str, LatinPool]
    poolLog: list[dict]
    seed: int
    wallClockMs: float = 0.0
    trialRecords: dict[str, list] = field(default_factory=dict)
    logs: dict[str, list[ProvenanceEvent]] = field(default_factory=dict)
    # block path -> (number of children, number of positions shown)
    blockShapes: dict[str, tuple[int, int]] = field(default_factory=dict)

    def outcomes(self) -> dict[str, int]:
        out = {"completed": 0, "abandoned": 0, "excluded": 0}
        for p in self.participants:
            out[p.sessionOutcome] += 1
        return out

    def balance(self) -> dict[str, list[list[int]]]:
        return {path: pool.balance_report() for path, pool in self.pools.items()}

    def to_dict(self) -> dict:
        """Deterministic summary (wall-clock time is left out)."""
        return {
            "seed": self.seed,
            "outcomes": self.outcomes(),
            "participants": [p.to_dict() for p in self.participants],
            "pools": {k: v.to_dict() for k, v in self.pools.items()},
            "balance": self.balance(),
            "coverage": coverage_stats(self),
            "poolLogLength": len(self.poolLog),
            "conservationHeld": all(e["conservation"] for e in self.poolLog),
        }


def _latin_blocks(config: StudyConfig) -> dict[str, int]:
    return {
        path: len(block.components)
        for block, path, _ in iter_blocks(config.sequence)
        if block.order == "latinSquare"
    }


def simulate_cohort(
    config: StudyConfig,
    n: int,
    policy: ParticipantPolicy,
    seed: int = 0,
    timeout_ms: int = 1_800_000,
    inter_arrival_ms: int | None = None,
    emit_logs: bool = False,
) -> CohortResult:
    """Run participants until ``n`` sessions finish; deterministic under ``seed``."""
    if n < 0:
        raise ValueError("cohort size must be non-negative")
    wall_start = time.perf_counter()
    gap = inter_arrival_ms if inter_arrival_ms is not None else timeout_ms + 60_000
    pools = {
        path: LatinPool.create(path, size, derive_seed("pool", seed, path) & 0x7FFFFFFF)
        for path, size in _latin_blocks(config).items()
    }
    pool_log: list[dict] = []

    def logged(op: str, pid: str, t: int, pool: LatinPool, **extra) -> None:
        pool_log.append(
            {"op": op, "participantId": pid, "t": t, "blockPath": pool.blockPath,
             "conservation": pool.conservation_holds(), **extra}
        )

    participants: list[ParticipantResult] = []
    records: dict[str, list] = {}
    logs: dict[str, list[ProvenanceEvent]] = {}
    finishing = 0  # finished plus in-flight finishers
    attempts = 0
    events: list[tuple[int, int, str, object]] = []
    counter = 0

    def schedule(t: int, kind: str, payload) -> None:
        nonlocal counter
        heapq.heappush(events, (t, counter, kind, payload))
        counter += 1

    if n > 0:
        schedule(0, "arrival", None)
    last_t = 0
    while events:
        now, _, kind, payload = heapq.heappop(events)
        last_t = max(last_t, now)
        if kind == "arrival":
            if finishing >= n:
                continue
            if attempts >= 4 * n:
                result = CohortResult(participants, pools, pool_log, seed, (time.perf_counter() - wall_start) * 1000)
                raise SimulationError("E_ATTEMPT_CAP", f"{attempts} attempts without {n} finished sessions", result)
            index = attempts
            attempts += 1
            pid = f"p{index:04d}"
            for pool in pools.values():
                for gone in pool.reclaim_expired(now, timeout_ms):
                    logged("reclaim", gone, now, pool)
            rows = {}
            for path, pool in pools.items():
                rows[path] = pool.assign(pid, now)
                logged("assign", pid, now, pool)
            prng = Stream.derived("participant", seed, policy.seed, index)
            realized = realize_sequence(config, index, seed, rows)
            abandon_after = None
            if prng.bernoulli(policy.abandonProb):
                static = sum(1 for it in realized.items if not it.dynamic) or 1
                abandon_after = prng.below(static)
            run = run_session(config, realized, policy, prng, now, abandon_after, emit_logs)
            session = run.session
            result = ParticipantResult(
                participantId=pid,
                participantIndex=index,
                sessionOutcome="abandoned" if run.abandoned else "completed",
                trials=len(session.answers),
                arrivedAt=now,
                endedAt=run.endedAt,
                assignedRow=rows,
                blockOrders=realized.blockOrders,
            )
            graded = [r.correct for r in session.answers if r.correct is not None]
            result.allCorrect = all(graded) if graded else None
            for state in session.dynamicStates.values():
                sc = state["staircase"]
                if sc.terminated:
                    result.jndEstimate = estimate_jnd(sc)
                    result.terminationReason = sc.terminated
                if sc.attentionLedger:
                    result.attentionPassRate = 1.0 - attention_failure_rate(sc)
                if not run.abandoned and should_exclude(sc):
                    result.sessionOutcome = "excluded"
            participants.append(result)
            records[pid] = [r.to_dict() for r in session.answers]
            if emit_logs:
                logs[pid] = run.events
            if not run.abandoned:
                finishing += 1
                schedule(run.endedAt, "finish", result)
            if finishing < n:
                schedule(now + gap, "arrival", None)
        else:
            result = payload
            for pool in pools.values():
                if result.participantId in pool.assigned:
                    pool.complete(result.participantId)
                    logged("complete", result.participantId, now, pool)
                else:
                    # the row timed out before the session finished
                    result.sessionOutcome = "abandoned"
            if result.sessionOutcome == "abandoned":
                finishing -= 1
                if not any(k == "arrival" for _, _, k, _ in events):
                    schedule(now + gap, "arrival", None)
    final = last_t + timeout_ms + 1
    for pool in pools.values():
        for gone in pool.reclaim_expired(final, timeout_ms):
            logged("reclaim", gone, final, pool)
    return CohortResult(
        participants,
        pools,
        pool_log,
        seed,
        (time.perf_counter() - wall_start) * 1000,
        records,
        logs,
        block_shapes(config),
    )


def block_shapes(config: StudyConfig) -> dict[str, tuple[int, int]]:
    shapes = {}
    for block, path, _ in iter_blocks(config.sequence):
        if block.order in ("fixed", "random", "latinSquare"):
            n = len(block.components)
            shapes[path] = (n, min(n, block.numSamples or n))
    return shapes


def coverage_stats(cohort: CohortResult) -> dict[str, list[list[int]]]:
    """``counts[child][position]`` per ordered block, over completed sessions."""
    tables = {
        path: [[0] * positions for _ in range(children)]
        for path, (children, positions) in cohort.blockShapes.items()
    }
    for p in cohort.participants:
        if p.sessionOutcome != "completed":
            continue
        for path, order in p.blockOrders.items():
            table = tables.get(path)
            if table is None:
                continue
            for position, child in enumerate(order):
                table[child][position] += 1
    return {k: tables[k] for k in sorted(tables)}
