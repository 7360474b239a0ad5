"""Participant session state machine.

A :class:`Session` walks a realized sequence: it serves components, grades
submitted answers, evaluates skip conditions and expands dynamic blocks by
asking their ordering strategy for one trial at a time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

from .config import END, Block, BlockCondition, ComponentDef, ResponseCondition, StudyConfig, iter_blocks
from .errors import SessionError
from .rng import derive_seed
from .sequencer import RealizedSequence, SequenceItem
from .staircase import StaircaseParams, Stop, staircase_init, staircase_next

log = logging.getLogger(__name__)

# --------------------------------------------------------------------------
# dynamic ordering strategies
# --------------------------------------------------------------------------

STAIRCASE_EXTRA_KEYS = ("trialComponent", "attentionComponent", "responseId")


class StaircaseStrategy:
    """Built-in ``staircase`` strategy for dynamic blocks.

    Block ``params`` hold staircase parameters plus optional
    ``trialComponent``, ``attentionComponent`` and ``responseId`` (default
    ``"choice"``). Without ``trialComponent`` the block's first child is the
    trial component and its second child, if any, the attention check.
    """

    name = "staircase"

    @staticmethod
    def split_params(block: Block) -> tuple[StaircaseParams, dict]:
        raw = dict(block.params or {})
        extra = {k: raw.pop(k) for k in STAIRCASE_EXTRA_KEYS if k in raw}
        children = [c for c in block.components if isinstance(c, str)]
        extra.setdefault("trialComponent", children[0] if children else None)
        extra.setdefault(
            "attentionComponent", children[1] if len(children) > 1 else extra["trialComponent"]
        )
        extra.setdefault("responseId", "choice")
        return StaircaseParams.from_dict(raw), extra

    def start(self, block: Block, seed: int) -> dict:
        params, extra = self.split_params(block)
        return {"staircase": staircase_init(params, seed), "extra": extra, "last": None}

    def next_trial(self, state: dict):
        trial = staircase_next(state["staircase"], state["last"])
        state["last"] = None
        if isinstance(trial, Stop):
            return trial
        extra = state["extra"]
        name = extra["attentionComponent"] if trial.isAttentionCheck else extra["trialComponent"]
        params = trial.to_order_params()
        params["responseId"] = extra["responseId"]
        return name, params

    def grade(self, state: dict, order_params: dict, responses: dict) -> bool:
        selected = responses.get(order_params["responseId"])
        correct = selected == order_params["correctSide"]
        state["last"] = {"selectedSide": selected, "correct": correct}
        return correct


STRATEGIES = {"staircase": StaircaseStrategy()}


# --------------------------------------------------------------------------
# grading
# --------------------------------------------------------------------------


def normalize_scalar(value, numeric: bool = False):
    """Key for exact comparison; numbers compare as normalized decimals."""
    if isinstance(value, bool):
        return ("bool", value)
    if isinstance(value, (int, float)):
        return ("num", Decimal(repr(value)).normalize())
    if numeric and isinstance(value, str):
        try:
            return ("num", Decimal(value.strip()).normalize())
        except InvalidOperation:
            pass
    return ("raw", value)


def grade(component: ComponentDef, responses: dict) -> bool | None:
    if not component.correctAnswers:
        return None
    kinds = {r.id: r.kind for r in component.responses or ()}
    for rid, expected in component.correctAnswers.items():
        numeric = kinds.get(rid) in ("numerical", "slider")
        if rid not in responses:
            return False
        if normalize_scalar(responses[rid], numeric) != normalize_scalar(expected, numeric):
            return False
    return True


def _compare(comparator: str, actual, expected) -> bool:
    if comparator in ("eq", "neq"):
        same = normalize_scalar(actual, True) == normalize_scalar(expected, True)
        return same if comparator == "eq" else not same
    try:
        a = Decimal(str(actual))
        b = Decimal(str(expected))
    except (InvalidOperation, ValueError):
        return False
    if isinstance(actual, bool) or isinstance(expected, bool):
        return False
    return a < b if comparator == "lt" else a > b


# --------------------------------------------------------------------------
# session
# --------------------------------------------------------------------------


@dataclass
class TrialRecord:
    instanceId: str
    componentName: str
    blockPath: str
    startedAt: int
    endedAt: int
    responses: dict
    correct: bool | None = None
    orderParams: dict = field(default_factory=dict)
    isInterruption: bool = False

    def to_dict(self) -> dict:
        return {
            "instanceId": self.instanceId,
            "componentName": self.componentName,
            "blockPath": self.blockPath,
            "startedAt": self.startedAt,
            "endedAt": self.endedAt,
            "responses": self.responses,
            "correct": self.correct,
            "orderParams": self.orderParams,
            "isInterruption": self.isInterruption,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrialRecord":
        return cls(
            instanceId=data["instanceId"],
            componentName=data["componentName"],
            blockPath=data.get("blockPath", ""),
            startedAt=int(data["startedAt"]),
            endedAt=int(data["endedAt"]),
            responses=dict(data.get("responses", {})),
            correct=data.get("correct"),
            orderParams=dict(data.get("orderParams", {})),
            isInterruption=bool(data.get("isInterruption", False)),
        )


@dataclass(frozen=True)
class Served:
    instanceId: str
    componentName: str
    orderParams: dict
    blockPath: str
    isInterruption: bool = False


DONE = None


def _segments(path: str) -> list[str]:
    return path.split("/")


class Session:
    """One participant's walk through a realized sequence."""

    def __init__(self, config: StudyConfig, sequence: RealizedSequence):
        self.config = config
        self.sequence = sequence
        self.cursor = 0
        self.answers: list[TrialRecord] = []
        self.dynamicStates: dict[str, dict] = {}
        self.status = "active"
        self.endReason: str | None = None
        self.warnings: list[str] = []
        self._pending: int | None = None
        self._blocks = {path: block for block, path, _ in iter_blocks(config.sequence)}
        self._dynamic_counts: dict[str, int] = {}
        for item in sequence.items:
            if item.dynamic and item.blockPath not in self.dynamicStates:
                block = self._blocks[item.blockPath]
                strategy = STRATEGIES.get(block.strategy or "")
                if strategy is None:
                    raise SessionError("E_UNKNOWN_STRATEGY", f"no strategy {block.strategy!r}")
                seed = derive_seed("dynamic", sequence.seed, item.blockPath, sequence.participantIndex)
                self.dynamicStates[item.blockPath] = strategy.start(block, seed)
        if not sequence.items:
            self._end("finished")

    @property
    def items(self) -> list[SequenceItem]:
        return self.sequence.items

    @property
    def active(self) -> bool:
        return self.status == "active"

    def _end(self, reason: str) -> None:
        self.status = "ended"
        self.endReason = reason
        self._pending = None

    def _strategy(self, path: str):
        return STRATEGIES[self._blocks[path].strategy]

    def next_component(self) -> Served | None:
        """Serve the next component, or return ``DONE`` (None) at the end."""
        if not self.active:
            raise SessionError("E_SESSION_ENDED", f"session ended ({self.endReason})")
        if self._pending is not None:
            return self._served(self.items[self._pending])
        while self.cursor < len(self.items):
            item = self.items[self.cursor]
            if not item.dynamic:
                self._pending = self.cursor
                return self._served(item)
            state = self.dynamicStates[item.blockPath]
            result = self._strategy(item.blockPath).next_trial(state)
            if isinstance(result, Stop):
                self.cursor += 1
                continue
            name, params = result
            k = self._dynamic_counts.get(item.blockPath, 0) + 1
            self._dynamic_counts[item.blockPath] = k
            trial = SequenceItem(f"{item.blockPath}#{k}", name, item.blockPath, orderParams=params)
            self.items.insert(self.cursor, trial)
            self._pending = self.cursor
            return self._served(trial)
        self._end("finished")
        return DONE

    @staticmethod
    def _served(item: SequenceItem) -> Served:
        return Served(item.instanceId, item.componentName, dict(item.orderParams), item.blockPath, item.isInterruption)

    def submit_answer(self, responses: dict, started_at: int, ended_at: int) -> TrialRecord:
        if self._pending is None:
            raise SessionError("E_NO_PENDING", "no component is awaiting an answer")
        item = self.items[self._pending]
        component = self.config.components.get(item.componentName)
        if component is not None:
            missing = [
                r.id for r in component.responses or () if r.required and responses.get(r.id) is None
            ]
            if missing:
                raise SessionError("E_MISSING_REQUIRED", f"missing required responses {missing}")
        if ended_at < started_at:
            raise SessionError("E_BAD_TIMES", "endedAt precedes startedAt")
        responses = dict(responses)
        if "correctSide" in item.orderParams and "responseId" in item.orderParams:
            correct = self._strategy(item.blockPath).grade(
                self.dynamicStates[item.blockPath], item.orderParams, responses
            )
        else:
            correct = grade(component, responses) if component is not None else None
        record = TrialRecord(
            instanceId=item.instanceId,
            componentName=item.componentName,
            blockPath=item.blockPath,
            startedAt=int(started_at),
            endedAt=int(ended_at),
            responses=responses,
            correct=correct,
            orderParams=dict(item.orderParams),
            isInterruption=item.isInterruption,
        )
        self.answers.append(record)
        self.cursor = self._pending + 1
        self._pending = None
        target = self.evaluate_skip(record)
        if target is not None:
            self._jump(target)
        return record

    def enclosing_blocks(self, block_path: str) -> list[tuple[str, Block]]:
        """Blocks enclosing ``block_path``, innermost first."""
        segs = _segments(block_path)
        out = []
        for i in range(len(segs), 0, -1):
            path = "/".join(segs[:i])
            if path in self._blocks:
                out.append((path, self._blocks[path]))
        return out

    def _realization_path(self, block_id: str, block_path: str) -> str | None:
        segs = _segments(block_path)
        for i in range(len(segs), 0, -1):
            if segs[i - 1] == block_id:
                return "/".join(segs[:i])
        for rec in reversed(self.answers):
            rsegs = _segments(rec.blockPath)
            if block_id in rsegs:
                return "/".join(rsegs[: len(rsegs) - rsegs[::-1].index(block_id)])
        return None

    def _count(self, cond: BlockCondition, record: TrialRecord) -> int:
        want = cond.check == "numCorrect"
        if cond.repeated:
            records = [r for r in self.answers if cond.blockId in _segments(r.blockPath)]
        else:
            path = self._realization_path(cond.blockId, record.blockPath)
            if path is None:
                return 0
            records = [
                r for r in self.answers if r.blockPath == path or r.blockPath.startswith(path + "/")
            ]
        return sum(1 for r in records if r.correct is want)

    def evaluate_skip(self, record: TrialRecord) -> str | None:
        """First satisfied skip target, innermost block first, declaration order within."""
        for _, block in self.enclosing_blocks(record.blockPath):
            for cond in block.skip:
                if isinstance(cond, BlockCondition):
                    if self._count(cond, record) >= cond.threshold:
                        return cond.target
                elif isinstance(cond, ResponseCondition):
                    if record.componentName == cond.componentName and cond.responseId in record.responses:
                        if _compare(cond.comparator, record.responses[cond.responseId], cond.value):
                            return cond.target
        return None

    def _jump(self, target: str) -> None:
        if target == END:
            self._end("skippedToEnd")
            return
        for index in range(self.cursor, len(self.items)):
            item = self.items[index]
            if (not item.dynamic and item.componentName == target) or target in _segments(item.blockPath):
                self.cursor = index
                return
        message = f"skip target {target!r} does not occur after position {self.cursor}"
        log.warning(message)
        self.warnings.append(message)
        self._end("skippedToEnd")


def start_session(config: StudyConfig, realized: RealizedSequence) -> Session:
    return Session(config, realized)


def replay(config: StudyConfig, realized: RealizedSequence, records: list[TrialRecord]) -> Session:
    """Re-drive a fresh session with the responses and times of ``records``."""
    session = Session(config, RealizedSequence.from_dict(realized.to_dict()))
    for rec in records:
        served = session.next_component()
        if served is None or served.instanceId != rec.instanceId:
            raise SessionError("E_REPLAY_DIVERGED", f"expected {rec.instanceId}, session served {served}")
        session.submit_answer(rec.responses, rec.startedAt, rec.endedAt)
    return session
