"""Latin squares and the per-block assignment pool.

The pool hands each arriving participant the head row of a queue of Latin
square rows. Rejected or timed-out rows go back to the head of the queue so
they are handed out again first. When the queue runs dry a fresh square,
relabeled with the next derived seed, is appended.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

from .errors import PoolError
from .rng import Stream


@dataclass(frozen=True)
class LatinSquare:
    n: int
    rows: tuple[tuple[int, ...], ...]

    def is_latin(self) -> bool:
        full = set(range(self.n))
        if len(self.rows) != self.n:
            return False
        if any(set(row) != full or len(row) != self.n for row in self.rows):
            return False
        return all({row[j] for row in self.rows} == full for j in range(self.n))


def build_latin_square(n: int, seed: int = 0) -> LatinSquare:
    """Cyclic square with rows, then columns, reordered by seeded permutations."""
    if not isinstance(n, int) or n < 1:
        raise PoolError("E_BAD_ORDER", f"Latin square order must be >= 1, got {n!r}")
    stream = Stream.derived("latin-square", n, seed)
    row_perm = stream.permutation(n)
    col_perm = stream.permutation(n)
    cyclic = [[(i + j) % n for j in range(n)] for i in range(n)]
    rows = tuple(tuple(cyclic[row_perm[i]][col_perm[j]] for j in range(n)) for i in range(n))
    return LatinSquare(n, rows)


@dataclass
class LatinPool:
    blockPath: str
    n: int
    seed: int = 0
    queue: list[list[int]] = field(default_factory=list)
    assigned: dict[str, dict] = field(default_factory=dict)
    completed: dict[str, list[int]] = field(default_factory=dict)
    rejected: list[dict] = field(default_factory=list)
    squaresIssued: int = 0

    @classmethod
    def create(cls, block_path: str, n: int, seed: int = 0) -> "LatinPool":
        pool = cls(blockPath=block_path, n=n, seed=seed)
        pool._replenish()
        return pool

    def _replenish(self) -> None:
        square = build_latin_square(self.n, self.seed + self.squaresIssued)
        self.queue.extend(list(row) for row in square.rows)
        self.squaresIssued += 1

    def assign(self, participant_id: str, now: int) -> list[int]:
        if participant_id in self.assigned or participant_id in self.completed:
            raise PoolError("E_DOUBLE_ASSIGN", f"participant {participant_id!r} already holds a row")
        if not self.queue:
            self._replenish()
        row = self.queue.pop(0)
        self.assigned[participant_id] = {"row": row, "assignedAt": int(now)}
        return list(row)

    def _take(self, participant_id: str) -> list[int]:
        entry = self.assigned.pop(participant_id, None)
        if entry is None:
            raise PoolError("E_NOT_ASSIGNED", f"participant {participant_id!r} holds no row")
        return entry["row"]

    def complete(self, participant_id: str) -> None:
        self.completed[participant_id] = self._take(participant_id)

    def reject(self, participant_id: str, reason: str = "manual") -> None:
        row = self._take(participant_id)
        self.queue.insert(0, row)
        self.rejected.append({"participantId": participant_id, "row": list(row), "reason": reason})

    def reclaim_expired(self, now: int, timeout: int) -> list[str]:
        """Reject every assignment older than ``timeout`` ms (strictly)."""
        if timeout <= 0:
            raise PoolError("E_BAD_TIMEOUT", "timeout must be positive")
        expired = [pid for pid, e in self.assigned.items() if now - e["assignedAt"] > timeout]
        # the oldest expired row ends up at the very front of the queue
        rows = [self._take(pid) for pid in expired]
        self.queue[:0] = rows
        self.rejected.extend(
            {"participantId": pid, "row": list(row), "reason": "timeout"}
            for pid, row in zip(expired, rows)
        )
        return expired

    def row_for(self, participant_id: str) -> list[int] | None:
        if participant_id in self.assigned:
            return list(self.assigned[participant_id]["row"])
        if participant_id in self.completed:
            return list(self.completed[participant_id])
        return None

    def balance_report(self) -> list[list[int]]:
        """``counts[condition][position]`` over completed rows."""
        counts = [[0] * self.n for _ in range(self.n)]
        for row in self.completed.values():
            for position, condition in enumerate(row):
                counts[condition][position] += 1
        return counts

    def conservation_holds(self) -> bool:
        held = len(self.queue) + len(self.assigned) + len(self.completed)
        disjoint = not (self.assigned.keys() & self.completed.keys())
        return disjoint and held == self.squaresIssued * self.n

    def to_dict(self) -> dict:
        return {
            "blockPath": self.blockPath,
            "n": self.n,
            "seed": self.seed,
            "queue": [list(r) for r in self.queue],
            "assigned": {k: {"row": list(v["row"]), "assignedAt": v["assignedAt"]} for k, v in self.assigned.items()},
            "completed": {k: list(v) for k, v in self.completed.items()},
            "rejected": [dict(r) for r in self.rejected],
            "squaresIssued": self.squaresIssued,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LatinPool":
        return cls(
            blockPath=data["blockPath"],
            n=int(data["n"]),
            seed=int(data.get("seed", 0)),
            queue=[list(r) for r in data.get("queue", [])],
            assigned={k: {"row": list(v["row"]), "assignedAt": int(v["assignedAt"])} for k, v in data.get("assigned", {}).items()},
            completed={k: list(v) for k, v in data.get("completed", {}).items()},
            rejected=[dict(r) for r in data.get("rejected", [])],
            squaresIssued=int(data.get("squaresIssued", 0)),
        )


def load_pool(path) -> LatinPool:
    with open(path, encoding="utf-8") as fh:
        return LatinPool.from_dict(json.load(fh))


def save_pool(pool: LatinPool, path) -> None:
    """Write ``pool`` atomically (temp file in the same directory, then rename)."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".pool-", suffix=".json", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(pool.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
