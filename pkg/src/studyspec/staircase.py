"""Adaptive two-alternative forced-choice staircase over correlation pairs.

Each regular trial shows a base correlation next to a comparison offset by the
current difference (above or below the base). A correct answer shrinks the
difference by ``stepDown``, an incorrect one grows it by ``stepUp``; with the
default 0.01/0.03 steps the track settles where the observer is right 75% of
the time. Every ``attentionEvery``-th served trial is an attention check
(0.01 vs 1.0) whose correct side is the opposite of the participant's last
click.

A run stops when the last ``windowSize`` regular differences show no
significant linear trend (OLS slope F-test), or when ``maxTrials`` regular
trials have been answered.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction

from scipy import stats

from .errors import StaircaseError
from .rng import Stream

_ROUND = 12


@dataclass(frozen=True)
class StaircaseParams:
    baseR: float
    startDiff: float = 0.1
    sign: str = "positive"
    approach: str = "above"
    stepDown: float = 0.01
    stepUp: float = 0.03
    windowSize: int = 24
    maxTrials: int = 50
    attentionEvery: int = 10
    attentionPair: tuple[float, float] = (0.01, 1.0)
    convergenceAlpha: float = 0.05

    @classmethod
    def from_dict(cls, data: dict) -> "StaircaseParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise StaircaseError("E_BAD_PARAMS", f"unknown staircase parameters {sorted(unknown)}")
        data = dict(data)
        pair = data.get("attentionPair")
        if isinstance(pair, dict):
            data["attentionPair"] = (float(pair.get("rA", 0.01)), float(pair.get("rB", 1.0)))
        elif pair is not None:
            data["attentionPair"] = tuple(float(x) for x in pair)
        if "baseR" not in data:
            raise StaircaseError("E_BAD_PARAMS", "baseR is required")
        try:
            return cls(**data)
        except TypeError as exc:
            raise StaircaseError("E_BAD_PARAMS", str(exc)) from None

    @property
    def max_diff(self) -> float:
        return 1.0 - self.baseR if self.approach == "above" else self.baseR

    def validate(self) -> None:
        problems = []
        if not 0.0 <= self.baseR <= 1.0:
            problems.append("baseR must lie in [0, 1]")
        if self.sign not in ("positive", "negative"):
            problems.append("sign must be 'positive' or 'negative'")
        if self.approach not in ("above", "below"):
            problems.append("approach must be 'above' or 'below'")
        if not (self.stepDown > 0 and self.stepUp > 0):
            problems.append("steps must be positive")
        elif self.stepDown >= self.stepUp:
            problems.append("stepDown must be smaller than stepUp")
        if self.startDiff <= 0 or self.startDiff <= self.stepDown:
            problems.append("startDiff must exceed stepDown")
        if self.windowSize < 3:
            problems.append("windowSize must be at least 3")
        if self.windowSize > self.maxTrials:
            problems.append("windowSize must not exceed maxTrials")
        if self.attentionEvery < 1:
            problems.append("attentionEvery must be positive")
        if not 0 < self.convergenceAlpha < 1:
            problems.append("convergenceAlpha must lie in (0, 1)")
        if len(self.attentionPair) != 2 or not all(0 <= r <= 1 for r in self.attentionPair):
            problems.append("attentionPair needs two correlations in [0, 1]")
        if not problems and self.max_diff < self.stepDown:
            problems.append("baseR leaves no room for a difference in the chosen direction")
        if problems:
            raise StaircaseError("E_BAD_PARAMS", "; ".join(problems))


@dataclass(frozen=True)
class TrialSpec:
    r1: float
    r2: float
    correctSide: str
    isAttentionCheck: bool
    trialIndex: int
    diff: float | None = None
    sign: str = "positive"

    @property
    def left_r(self) -> float:
        hi, lo = max(self.r1, self.r2), min(self.r1, self.r2)
        return hi if self.correctSide == "left" else lo

    @property
    def right_r(self) -> float:
        hi, lo = max(self.r1, self.r2), min(self.r1, self.r2)
        return hi if self.correctSide == "right" else lo

    def to_order_params(self) -> dict:
        return {
            "r1": self.r1,
            "r2": self.r2,
            "leftR": self.left_r,
            "rightR": self.right_r,
            "correctSide": self.correctSide,
            "isAttentionCheck": self.isAttentionCheck,
            "trialIndex": self.trialIndex,
            "diff": self.diff,
            "sign": self.sign,
        }


@dataclass(frozen=True)
class Stop:
    reason: str


@dataclass
class StaircaseState:
    params: StaircaseParams
    currentDiff: float
    stream: Stream
    trialIndex: int = 0
    history: list[dict] = field(default_factory=list)
    attentionLedger: list[dict] = field(default_factory=list)
    lastSelectionSide: str | None = None
    terminated: str | None = None
    pending: TrialSpec | None = None
    servedAttention: list[int] = field(default_factory=list)

    @property
    def regular_count(self) -> int:
        return len(self.history)

    def summary(self) -> dict:
        return {
            "params": asdict(self.params),
            "currentDiff": self.currentDiff,
            "trialIndex": self.trialIndex,
            "history": list(self.history),
            "attentionLedger": list(self.attentionLedger),
            "lastSelectionSide": self.lastSelectionSide,
            "terminated": self.terminated,
        }


def _clamp(diff: float, params: StaircaseParams) -> float:
    return round(min(max(diff, params.stepDown), params.max_diff), _ROUND)


def staircase_init(params: StaircaseParams, seed: int = 0) -> StaircaseState:
    params.validate()
    return StaircaseState(
        params=params,
        currentDiff=_clamp(params.startDiff, params),
        stream=Stream.derived("staircase", seed),
    )


def comparison_pair(state: StaircaseState) -> tuple[float, float]:
    p = state.params
    if p.approach == "above":
        comp = min(1.0, p.baseR + state.currentDiff)
    else:
        comp = max(0.0, p.baseR - state.currentDiff)
    return p.baseR, round(comp, _ROUND)


def check_convergence(window, alpha: float = 0.05, window_size: int | None = None) -> bool:
    """True when an OLS fit of ``window`` on trial index shows no significant slope.

    F = regression mean square / residual mean square on (1, w - 2) degrees of
    freedom; the window converges when the F-test p-value exceeds ``alpha``.
    A window with no variation converges.
    """
    values = [float(v) for v in window]
    w = len(values)
    if w < 3 or (window_size is not None and w != window_size):
        raise StaircaseError("E_SHORT_WINDOW", f"window of {w} values is too short")
    f_stat = trend_f_statistic(values)
    if f_stat is None:
        return True
    if f_stat == float("inf"):
        return False
    p_value = float(stats.f.sf(f_stat, 1, w - 2))
    return p_value > alpha


def trend_f_statistic(values) -> float | None:
    """F statistic of the linear trend; None for a window with no variation."""
    w = len(values)
    if max(values) == min(values):
        return None
    xs = range(1, w + 1)
    x_mean = (w + 1) / 2.0
    y_mean = sum(values) / w
    sxx = sum((x - x_mean) ** 2 for x in xs)
    sxy = sum((x - x_mean) * (y - y_mean) for x, y in zip(xs, values))
    syy = sum((y - y_mean) ** 2 for y in values)
    ss_reg = sxy * sxy / sxx
    ss_res = max(syy - ss_reg, 0.0)
    # residuals at rounding-noise level mean a perfect line
    if ss_res <= 1e-12 * syy:
        return float("inf") if ss_reg > 0 else None
    return ss_reg / (ss_res / (w - 2))


def staircase_next(state: StaircaseState, last_response: dict | None = None) -> TrialSpec | Stop:
    """Apply the previous response, then emit the next trial or a Stop."""
    if state.terminated:
        raise StaircaseError("E_TERMINATED", f"staircase already stopped ({state.terminated})")
    p = state.params
    if state.pending is not None:
        if last_response is None:
            raise StaircaseError("E_NO_RESPONSE", "the previous trial has not been answered")
        trial = state.pending
        correct = bool(last_response["correct"])
        side = last_response.get("selectedSide")
        if trial.isAttentionCheck:
            state.attentionLedger.append({"trialIndex": trial.trialIndex, "passed": correct})
        else:
            state.history.append({"trialIndex": trial.trialIndex, "diff": trial.diff, "correct": correct})
            step = -p.stepDown if correct else p.stepUp
            state.currentDiff = _clamp(state.currentDiff + step, p)
        if side is not None:
            state.lastSelectionSide = side
        state.pending = None

        if state.regular_count >= p.maxTrials:
            state.terminated = "capped"
        elif state.regular_count >= p.windowSize:
            window = [h["diff"] for h in state.history[-p.windowSize:]]
            if check_convergence(window, p.convergenceAlpha):
                state.terminated = "converged"
        if state.terminated:
            return Stop(state.terminated)

    index = state.trialIndex + 1
    if index % p.attentionEvery == 0:
        if state.lastSelectionSide in ("left", "right"):
            correct_side = "right" if state.lastSelectionSide == "left" else "left"
        else:
            correct_side = state.stream.choice(("left", "right"))
        r_a, r_b = p.attentionPair
        trial = TrialSpec(r_a, r_b, correct_side, True, index, None, p.sign)
        state.servedAttention.append(index)
    else:
        r1, r2 = comparison_pair(state)
        correct_side = state.stream.choice(("left", "right"))
        trial = TrialSpec(r1, r2, correct_side, False, index, round(abs(r2 - r1), _ROUND), p.sign)
    state.trialIndex = index
    state.pending = trial
    return trial


def estimate_jnd(state: StaircaseState) -> float:
    """Mean of the last ``windowSize`` regular-trial differences."""
    if not state.terminated:
        raise StaircaseError("E_NOT_TERMINATED", "staircase is still running")
    diffs = [h["diff"] for h in state.history[-state.params.windowSize:]]
    if not diffs:
        return float("nan")
    return sum(diffs) / len(diffs)


def attention_failure_rate(state: StaircaseState) -> float:
    total = len(state.attentionLedger)
    if total == 0:
        return 0.0
    return sum(not a["passed"] for a in state.attentionLedger) / total


def should_exclude(state: StaircaseState, max_failure_rate: float = 0.2) -> bool:
    """True when strictly more than ``max_failure_rate`` of attention checks failed."""
    total = len(state.attentionLedger)
    if total == 0:
        return False
    failures = sum(not a["passed"] for a in state.attentionLedger)
    return Fraction(failures, total) > Fraction(str(max_failure_rate))
