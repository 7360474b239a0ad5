"""Tidy (long-format) CSV export of trial records."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

TIDY_COLUMNS = (
    "participantId",
    "instanceId",
    "componentName",
    "blockPath",
    "responseId",
    "value",
    "correct",
    "startedAt",
    "endedAt",
    "duration",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True)
    return str(value)


def tidy_rows(participant_id: str, records: list[dict]) -> list[dict]:
    """One row per (participant, instanceId, responseId); components without
    responses still get a row with an empty responseId."""
    rows = []
    for rec in records:
        base = {
            "participantId": participant_id,
            "instanceId": rec["instanceId"],
            "componentName": rec.get("componentName", ""),
            "blockPath": rec.get("blockPath", ""),
            "correct": _cell(rec.get("correct")),
            "startedAt": rec["startedAt"],
            "endedAt": rec["endedAt"],
            "duration": rec["endedAt"] - rec["startedAt"],
        }
        responses = rec.get("responses") or {}
        if not responses:
            rows.append({**base, "responseId": "", "value": ""})
        for rid in sorted(responses):
            rows.append({**base, "responseId": rid, "value": _cell(responses[rid])})
    return rows


def load_results_dir(directory) -> dict[str, list[dict]]:
    """Trial files (``*.json``) keyed by participant id.

    A file holds either a list of trial records (participant id = file stem)
    or an object with ``participantId`` and ``trials``.
    """
    out = {}
    for path in sorted(Path(directory).glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, dict) and "trials" in data:
            out[str(data.get("participantId", path.stem))] = data["trials"]
        elif isinstance(data, list):
            out[path.stem] = data
    return out


def tidy_csv(results: dict[str, list[dict]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TIDY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for pid in sorted(results):
        writer.writerows(tidy_rows(pid, results[pid]))
    return buf.getvalue()
