"""Per-participant sequence realization.

Each block orders its immediate children as units (nested blocks stay
contiguous), truncates the ordering to ``numSamples``, flattens depth first
and finally inserts its interruptions. Random orderings use a stream keyed on
``(seed, blockPath, participantIndex)``; see :mod:`studyspec.rng`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .config import Block, DeterministicInterruption, InterruptionSpec, RandomInterruption, StudyConfig, iter_blocks
from .errors import SequenceError
from .latin import build_latin_square
from .rng import Stream


@dataclass
class SequenceItem:
    instanceId: str
    componentName: str
    blockPath: str
    isInterruption: bool = False
    orderParams: dict = field(default_factory=dict)
    # placeholder for a dynamic block; the runtime expands it into trials
    dynamic: bool = False

    def to_dict(self) -> dict:
        return {
            "instanceId": self.instanceId,
            "componentName": self.componentName,
            "blockPath": self.blockPath,
            "isInterruption": self.isInterruption,
            "orderParams": self.orderParams,
            "dynamic": self.dynamic,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SequenceItem":
        return cls(
            instanceId=data["instanceId"],
            componentName=data["componentName"],
            blockPath=data["blockPath"],
            isInterruption=bool(data.get("isInterruption", False)),
            orderParams=dict(data.get("orderParams", {})),
            dynamic=bool(data.get("dynamic", False)),
        )


@dataclass
class RealizedSequence:
    items: list[SequenceItem]
    participantIndex: int
    seed: int
    # block path -> ordered (and truncated) child indices
    blockOrders: dict[str, list[int]] = field(default_factory=dict)

    def component_names(self, include_interruptions: bool = True) -> list[str]:
        return [
            it.componentName
            for it in self.items
            if include_interruptions or not it.isInterruption
        ]

    def to_dict(self) -> dict:
        return {
            "participantIndex": self.participantIndex,
            "seed": self.seed,
            "blockOrders": self.blockOrders,
            "items": [it.to_dict() for it in self.items],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RealizedSequence":
        return cls(
            items=[SequenceItem.from_dict(x) for x in data["items"]],
            participantIndex=int(data["participantIndex"]),
            seed=int(data["seed"]),
            blockOrders={k: list(v) for k, v in data.get("blockOrders", {}).items()},
        )


def interruption_slots(n_items: int, spec: InterruptionSpec, rng: Stream | None = None) -> list[int]:
    """Final-list indices the interruptions of ``spec`` occupy over ``n_items`` originals."""
    if isinstance(spec, DeterministicInterruption):
        if spec.spacing < 1 or spec.firstLocation < 0:
            raise SequenceError("E_BAD_SPACING", "deterministic interruptions need spacing >= 1 and firstLocation >= 0")
        slots = []
        pos = spec.firstLocation
        placed_originals = 0
        total = 0
        # walk the final list; an interruption is placed only while originals remain after it
        while placed_originals < n_items:
            if total == pos:
                if spec.spacing == 1 and slots and slots[-1] == total - 1:
                    raise SequenceError("E_BAD_SPACING", "spacing 1 leaves no room for original items")
                slots.append(total)
                pos += spec.spacing
            else:
                placed_originals += 1
            total += 1
        return slots
    if isinstance(spec, RandomInterruption):
        if rng is None:
            raise ValueError("random interruptions need a stream")
        k = spec.numInterruptions
        step = max(spec.minGap, 1)
        span = n_items - (k - 1) * (step - 1)
        if k < 1 or span < k:
            raise SequenceError(
                "E_UNSATISFIABLE",
                f"cannot place {k} interruptions with minGap {spec.minGap} among {n_items} items",
            )
        # uniform k-subset of gaps 1..n_items with pairwise distance >= step
        picks = [h + 1 for h in rng.sample(span, k)]
        gaps = [h + i * (step - 1) for i, h in enumerate(picks)]
        return [g + i for i, g in enumerate(gaps)]
    raise TypeError(f"unknown interruption spec {spec!r}")


def insert_interruptions(
    items: Sequence,
    spec: InterruptionSpec,
    rng: Stream | None = None,
    make: Callable[[str], object] | None = None,
) -> list:
    """Return ``items`` with interruption entries inserted.

    Interruption component names cycle through ``spec.components``; ``make``
    turns a name into the inserted entry (the bare name by default).
    """
    make = make or (lambda name: name)
    slots = interruption_slots(len(items), spec, rng)
    if slots and not spec.components:
        raise SequenceError("E_UNSATISFIABLE", "interruption spec names no components")
    out: list = []
    originals = iter(items)
    slot_set = {s: i for i, s in enumerate(slots)}
    for index in range(len(items) + len(slots)):
        if index in slot_set:
            names = spec.components
            out.append(make(names[slot_set[index] % len(names)]))
        else:
            out.append(next(originals))
    return out


def default_assignments(config: StudyConfig, participant_index: int, seed: int = 0) -> dict[str, list[int]]:
    """Latin rows taken from a single seeded square, cycling by participant index."""
    out = {}
    for block, path, _ in iter_blocks(config.sequence):
        if block.order == "latinSquare" and block.components:
            square = build_latin_square(len(block.components), seed)
            out[path] = list(square.rows[participant_index % square.n])
    return out


def order_children(block: Block, path: str, participant_index: int, seed: int, assignments: dict) -> list[int]:
    n = len(block.components)
    if block.order == "fixed":
        order = list(range(n))
    elif block.order == "random":
        order = Stream.derived("order", seed, path, participant_index).permutation(n)
    elif block.order == "latinSquare":
        if path not in assignments:
            raise SequenceError("E_MISSING_ASSIGNMENT", f"no Latin square row assigned for block {path!r}")
        order = list(assignments[path])
        if sorted(order) != list(range(n)):
            raise SequenceError("E_MISSING_ASSIGNMENT", f"row {order} does not fit block {path!r} with {n} children")
    else:
        raise SequenceError("E_BAD_ORDER", f"block {path!r} has order {block.order!r}")
    if block.numSamples is not None:
        order = order[: block.numSamples]
    return order


def realize_sequence(
    config: StudyConfig,
    participant_index: int,
    seed: int = 0,
    pool_assignments: dict[str, Sequence[int]] | None = None,
) -> RealizedSequence:
    """Realize the ordered component list one participant will see."""
    if pool_assignments is None:
        pool_assignments = default_assignments(config, participant_index, seed)
    block_orders: dict[str, list[int]] = {}

    def walk(block: Block, path: str) -> list[SequenceItem]:
        if block.order == "dynamic":
            return [
                SequenceItem(
                    instanceId=f"{path}#dynamic",
                    componentName="",
                    blockPath=path,
                    orderParams={"strategy": block.strategy},
                    dynamic=True,
                )
            ]
        order = order_children(block, path, participant_index, seed, pool_assignments)
        block_orders[path] = order
        flat: list[SequenceItem] = []
        for i in order:
            child = block.components[i]
            if isinstance(child, str):
                flat.append(SequenceItem("", child, path))
            else:
                seg = child.id if child.id is not None else str(i)
                flat.extend(walk(child, f"{path}/{seg}"))
        for k, spec in enumerate(block.interruptions):
            if not flat:
                break
            rng = Stream.derived("interruptions", seed, path, k, participant_index)
            flat = insert_interruptions(
                flat, spec, rng, make=lambda name: SequenceItem("", name, path, isInterruption=True)
            )
        return flat

    root = config.sequence
    items = walk(root, root.id or "root")
    seen: dict[str, int] = {}
    for item in items:
        if item.dynamic:
            continue
        seen[item.componentName] = seen.get(item.componentName, 0) + 1
        item.instanceId = f"{item.componentName}_{seen[item.componentName]}"
    return RealizedSequence(items, participant_index, seed, block_orders)
