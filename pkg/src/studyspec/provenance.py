"""Provenance event logs: validation, timelines and hover dwell analytics.

Logs are JSON Lines, one event per line::

    {"t": 1000, "kind": "hoverEnter", "instanceId": "trial_1", "itemId": "A", "searchHighlighted": true}
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .errors import LogError

EVENT_KINDS = frozenset(
    {"componentStart", "componentEnd", "hoverEnter", "hoverExit", "click", "keypress", "searchQuery", "custom"}
)


@dataclass(frozen=True)
class ProvenanceEvent:
    t: int
    kind: str
    instanceId: str
    itemId: str | None = None
    payload: dict = field(default_factory=dict)
    searchHighlighted: bool | None = None

    def to_dict(self) -> dict:
        out = {"t": self.t, "kind": self.kind, "instanceId": self.instanceId}
        if self.itemId is not None:
            out["itemId"] = self.itemId
        if self.payload:
            out["payload"] = self.payload
        if self.searchHighlighted is not None:
            out["searchHighlighted"] = self.searchHighlighted
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProvenanceEvent":
        t = data.get("t")
        if not isinstance(t, int) or isinstance(t, bool):
            raise LogError("E_INVALID_LOG", f"event time must be integer ms, got {t!r}")
        kind = data.get("kind")
        if kind not in EVENT_KINDS:
            raise LogError("E_INVALID_LOG", f"unknown event kind {kind!r}")
        if not isinstance(data.get("instanceId"), str):
            raise LogError("E_INVALID_LOG", "event has no instanceId")
        return cls(
            t=t,
            kind=kind,
            instanceId=data["instanceId"],
            itemId=data.get("itemId"),
            payload=dict(data.get("payload") or {}),
            searchHighlighted=data.get("searchHighlighted"),
        )


def parse_log(text: str) -> list[ProvenanceEvent]:
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogError("E_INVALID_LOG", f"line {lineno}: {exc}") from None
        events.append(ProvenanceEvent.from_dict(data))
    return events


def dump_log(events: Iterable[ProvenanceEvent]) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in events)


def read_log(path) -> list[ProvenanceEvent]:
    with open(path, encoding="utf-8") as fh:
        return parse_log(fh.read())


@dataclass(frozen=True)
class LogFlag:
    code: str
    index: int
    message: str

    def to_dict(self) -> dict:
        return {"code": self.code, "index": self.index, "message": self.message}


@dataclass
class LogReport:
    flags: list[LogFlag] = field(default_factory=list)

    @property
    def replayable(self) -> bool:
        return not self.flags

    def codes(self) -> list[str]:
        return [f.code for f in self.flags]


def validate_log(events: list[ProvenanceEvent]) -> LogReport:
    """Flag ordering and pairing problems; an unflagged log is replayable.

    Hovers still open at ``componentEnd`` are not flagged; they close there.
    """
    report = LogReport()
    flag = lambda code, i, msg: report.flags.append(LogFlag(code, i, msg))  # noqa: E731
    open_component: str | None = None
    started: set[str] = set()
    hovering: set[str] = set()
    last_t = None
    for i, ev in enumerate(events):
        if last_t is not None and ev.t < last_t:
            flag("NON_MONOTONIC", i, f"t={ev.t} follows t={last_t}")
        last_t = ev.t if last_t is None else max(last_t, ev.t)
        if ev.kind == "componentStart":
            if open_component is not None:
                flag("UNMATCHED_START", i, f"{ev.instanceId} starts while {open_component} is open")
            if ev.instanceId in started:
                flag("DUPLICATE_START", i, f"{ev.instanceId} started twice")
            started.add(ev.instanceId)
            open_component = ev.instanceId
            hovering = set()
            continue
        if ev.kind == "componentEnd":
            if open_component != ev.instanceId:
                flag("UNMATCHED_END", i, f"{ev.instanceId} ends without a matching start")
            else:
                open_component = None
                hovering = set()
            continue
        if open_component is None or ev.instanceId != open_component:
            flag("OUTSIDE_COMPONENT", i, f"{ev.kind} outside any open component interval")
            continue
        if ev.kind == "hoverEnter":
            if ev.itemId is None:
                flag("MISSING_ITEM", i, "hoverEnter without itemId")
            elif ev.itemId in hovering:
                flag("SAME_ITEM_OVERLAP", i, f"{ev.itemId} entered while already hovered")
            else:
                hovering.add(ev.itemId)
        elif ev.kind == "hoverExit":
            if ev.itemId not in hovering:
                flag("UNMATCHED_EXIT", i, f"exit from {ev.itemId} without enter")
            else:
                hovering.discard(ev.itemId)
    if open_component is not None:
        flag("UNCLOSED_COMPONENT", len(events), f"{open_component} never ends")
    return report


def _require_valid(events: list[ProvenanceEvent]) -> None:
    report = validate_log(events)
    if not report.replayable:
        first = report.flags[0]
        raise LogError("E_INVALID_LOG", f"{first.code} at event {first.index}: {first.message}")


@dataclass(frozen=True)
class Interval:
    instanceId: str
    start: int
    end: int
    duration: int
    eventCount: int

    def to_dict(self) -> dict:
        return {
            "instanceId": self.instanceId,
            "start": self.start,
            "end": self.end,
            "duration": self.duration,
            "eventCount": self.eventCount,
        }


@dataclass(frozen=True)
class Timeline:
    intervals: tuple[Interval, ...]
    totalDuration: int

    def by_instance(self) -> dict[str, Interval]:
        return {iv.instanceId: iv for iv in self.intervals}

    def to_dict(self) -> dict:
        return {"intervals": [iv.to_dict() for iv in self.intervals], "totalDuration": self.totalDuration}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "Timeline":
        return cls(tuple(Interval(**iv) for iv in data["intervals"]), int(data["totalDuration"]))

    @classmethod
    def from_json(cls, text: str) -> "Timeline":
        return cls.from_dict(json.loads(text))


def reconstruct_timeline(events: list[ProvenanceEvent]) -> Timeline:
    """One interval per componentStart/componentEnd pair, in log order."""
    _require_valid(events)
    intervals = []
    current = None
    for ev in events:
        if ev.kind == "componentStart":
            current = [ev.instanceId, ev.t, 0]
        elif ev.kind == "componentEnd":
            iid, start, count = current
            intervals.append(Interval(iid, start, ev.t, ev.t - start, count))
            current = None
        elif current is not None:
            current[2] += 1
    total = intervals[-1].end - intervals[0].start if intervals else 0
    return Timeline(tuple(intervals), total)


@dataclass
class ItemDwell:
    totalDwell: int = 0
    visits: int = 0
    searchDwell: int = 0
    nonSearchDwell: int = 0

    def to_dict(self) -> dict:
        return {
            "totalDwell": self.totalDwell,
            "visits": self.visits,
            "searchDwell": self.searchDwell,
            "nonSearchDwell": self.nonSearchDwell,
        }


@dataclass
class DwellReport:
    items: dict[str, ItemDwell] = field(default_factory=dict)

    @property
    def maxDwell(self) -> int:
        return max((d.totalDwell for d in self.items.values()), default=0)

    def merged(self, other: "DwellReport") -> "DwellReport":
        out = DwellReport({k: ItemDwell(**v.to_dict()) for k, v in self.items.items()})
        for key, d in other.items.items():
            acc = out.items.setdefault(key, ItemDwell())
            acc.totalDwell += d.totalDwell
            acc.visits += d.visits
            acc.searchDwell += d.searchDwell
            acc.nonSearchDwell += d.nonSearchDwell
        return out

    def to_dict(self) -> dict:
        return {"items": {k: v.to_dict() for k, v in sorted(self.items.items())}, "maxDwell": self.maxDwell}


def dwell_per_item(events: list[ProvenanceEvent], instance_id: str) -> DwellReport:
    """Hover time per item inside one component.

    A span is attributed wholly to search or non-search time by the flag on
    its enter event. Hovers still open at componentEnd close there.
    """
    _require_valid(events)
    report = DwellReport()
    inside = False
    open_spans: dict[str, tuple[int, bool]] = {}

    def close(item: str, t: int) -> None:
        start, highlighted = open_spans.pop(item)
        d = report.items.setdefault(item, ItemDwell())
        span = t - start
        d.totalDwell += span
        d.visits += 1
        if highlighted:
            d.searchDwell += span
        else:
            d.nonSearchDwell += span

    for ev in events:
        if ev.instanceId != instance_id:
            continue
        if ev.kind == "componentStart":
            inside = True
        elif ev.kind == "componentEnd":
            for item in list(open_spans):
                close(item, ev.t)
            inside = False
        elif inside and ev.kind == "hoverEnter":
            open_spans[ev.itemId] = (ev.t, bool(ev.searchHighlighted))
        elif inside and ev.kind == "hoverExit":
            close(ev.itemId, ev.t)
    return report


def dwell_all(events: list[ProvenanceEvent]) -> dict[str, DwellReport]:
    """Dwell report for every component instance in log order."""
    ids = [ev.instanceId for ev in events if ev.kind == "componentStart"]
    return {iid: dwell_per_item(events, iid) for iid in ids}


def participant_dwell(events: list[ProvenanceEvent]) -> DwellReport:
    total = DwellReport()
    for report in dwell_all(events).values():
        total = total.merged(report)
    return total


def exclude_by_dwell(participants: dict[str, DwellReport], threshold_ms: int = 500) -> list[str]:
    """Kept ids: longest per-item dwell strictly above ``threshold_ms``, sorted."""
    return sorted(pid for pid, report in participants.items() if report.maxDwell > threshold_ms)


def event_counts(events: list[ProvenanceEvent]) -> Counter:
    return Counter(ev.kind for ev in events)
