"""Study configuration model, JSON parsing, canonical form and inheritance.

A configuration document is a JSON object::

    {
      "studyMetadata": {...},
      "importedLibraries": ["..."],
      "baseComponents": {"name": {component fields}},
      "components": {"name": {component fields}},
      "sequence": {block}
    }

Component names prefixed with ``lib:`` refer to components provided by an
imported library; they are accepted unresolved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Union

from .errors import ConfigError

LIB_PREFIX = "lib:"
END = "end"

COMP_TYPES = frozenset(
    {"markdown", "react", "image", "website", "form", "vega", "questionnaire"}
)
RESPONSE_KINDS = frozenset(
    {
        "numerical",
        "shortText",
        "longText",
        "likert",
        "dropdown",
        "slider",
        "radio",
        "checkbox",
        "matrix",
        "reactive",
        "video",
    }
)
ORDERS = frozenset({"fixed", "random", "latinSquare", "dynamic"})
CHECKS = frozenset({"numCorrect", "numIncorrect"})
COMPARATORS = frozenset({"eq", "neq", "lt", "gt"})

Scalar = Union[str, int, float, bool, None]


@dataclass(frozen=True)
class Finding:
    code: str
    path: str
    message: str
    severity: str = "error"

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "path": self.path,
            "message": self.message,
            "severity": self.severity,
        }


@dataclass
class ValidationReport:
    errors: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, code: str, path: str, message: str) -> None:
        self.errors.append(Finding(code, path, message, "error"))

    def warn(self, code: str, path: str, message: str) -> None:
        self.warnings.append(Finding(code, path, message, "warn"))

    def extend(self, other: "ValidationReport") -> None:
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)

    def codes(self) -> list[str]:
        return [f.code for f in self.errors + self.warnings]

    def to_dict(self) -> dict:
        return {
            "errors": [f.to_dict() for f in self.errors],
            "warnings": [f.to_dict() for f in self.warnings],
        }


@dataclass(frozen=True)
class ResponseDef:
    id: str
    kind: str
    required: bool = True
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "required": self.required,
            "parameters": self.parameters,
        }


@dataclass(frozen=True)
class ComponentDef:
    """A component record.

    Fields left as ``None`` were not set in the document; inheritance fills
    them from the named base.
    """

    compType: str | None = None
    payload: dict | None = None
    responses: tuple[ResponseDef, ...] | None = None
    correctAnswers: dict | None = None
    baseComponent: str | None = None

    def response_ids(self) -> list[str]:
        return [r.id for r in self.responses or ()]

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        if self.compType is not None:
            out["compType"] = self.compType
        if self.payload is not None:
            out["payload"] = self.payload
        if self.responses is not None:
            out["responses"] = [r.to_dict() for r in self.responses]
        if self.correctAnswers is not None:
            out["correctAnswers"] = self.correctAnswers
        if self.baseComponent is not None:
            out["baseComponent"] = self.baseComponent
        return out


@dataclass(frozen=True)
class DeterministicInterruption:
    firstLocation: int
    spacing: int
    components: tuple[str, ...]
    variant: str = "deterministic"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "firstLocation": self.firstLocation,
            "spacing": self.spacing,
            "components": list(self.components),
        }


@dataclass(frozen=True)
class RandomInterruption:
    numInterruptions: int
    minGap: int
    components: tuple[str, ...]
    variant: str = "random"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "numInterruptions": self.numInterruptions,
            "minGap": self.minGap,
            "components": list(self.components),
        }


InterruptionSpec = Union[DeterministicInterruption, RandomInterruption]


@dataclass(frozen=True)
class BlockCondition:
    """``numCorrect``/``numIncorrect`` threshold over a block's graded trials.

    With ``repeated`` set, counts aggregate over every realization of the
    block id instead of only the current one.
    """

    blockId: str
    check: str
    threshold: int
    target: str
    repeated: bool = False

    @property
    def variant(self) -> str:
        return "repeatedBlockCondition" if self.repeated else "blockCondition"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "blockId": self.blockId,
            "check": self.check,
            "threshold": self.threshold,
            "target": self.target,
        }


@dataclass(frozen=True)
class ResponseCondition:
    componentName: str
    responseId: str
    comparator: str
    value: Scalar
    target: str
    variant: str = "responseCondition"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "componentName": self.componentName,
            "responseId": self.responseId,
            "comparator": self.comparator,
            "value": self.value,
            "target": self.target,
        }


SkipCondition = Union[BlockCondition, ResponseCondition]


@dataclass(frozen=True)
class Block:
    order: str
    components: tuple[Union[str, "Block"], ...] = ()
    numSamples: int | None = None
    interruptions: tuple[InterruptionSpec, ...] = ()
    skip: tuple[SkipCondition, ...] = ()
    id: str | None = None
    strategy: str | None = None
    params: dict | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "order": self.order,
            "components": [
                c if isinstance(c, str) else c.to_dict() for c in self.components
            ],
        }
        if self.numSamples is not None:
            out["numSamples"] = self.numSamples
        if self.interruptions:
            out["interruptions"] = [i.to_dict() for i in self.interruptions]
        if self.skip:
            out["skip"] = [s.to_dict() for s in self.skip]
        if self.id is not None:
            out["id"] = self.id
        if self.strategy is not None:
            out["strategy"] = self.strategy
        if self.params is not None:
            out["params"] = self.params
        return out

    def child_blocks(self) -> list["Block"]:
        return [c for c in self.components if isinstance(c, Block)]


@dataclass(frozen=True)
class StudyConfig:
    sequence: Block
    components: dict[str, ComponentDef] = field(default_factory=dict)
    baseComponents: dict[str, ComponentDef] = field(default_factory=dict)
    importedLibraries: tuple[str, ...] = ()
    studyMetadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "studyMetadata": self.studyMetadata,
            "importedLibraries": list(self.importedLibraries),
            "baseComponents": {k: v.to_dict() for k, v in self.baseComponents.items()},
            "components": {k: v.to_dict() for k, v in self.components.items()},
            "sequence": self.sequence.to_dict(),
        }


def canonicalize(config: StudyConfig) -> str:
    """Canonical JSON text: sorted keys, 2-space indent, LF, trailing newline."""
    return json.dumps(config.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def iter_blocks(block: Block, path: str | None = None, cfg_path: str = "sequence"):
    """Yield ``(block, block_path, config_path)`` depth-first, parents first.

    ``block_path`` joins block ids (or child indices for anonymous blocks)
    with ``/``; the root segment is its id or ``root``.
    """
    if path is None:
        path = block.id or "root"
    yield block, path, cfg_path
    for i, child in enumerate(block.components):
        if isinstance(child, Block):
            seg = child.id if child.id is not None else str(i)
            yield from iter_blocks(child, f"{path}/{seg}", f"{cfg_path}.components[{i}]")


def is_external(name: str) -> bool:
    return name.startswith(LIB_PREFIX)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

_TYPE_NAMES = {
    str: "string",
    int: "integer",
    bool: "boolean",
    dict: "object",
    list: "array",
    float: "number",
}


def _is_type(value, typ) -> bool:
    if typ is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if typ is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if typ == "scalar":
        return value is None or isinstance(value, (str, int, float, bool))
    return isinstance(value, typ)


class _Reader:
    def __init__(self, report: ValidationReport, strict: bool):
        self.report = report
        self.strict = strict

    def obj(self, value, path: str) -> dict | None:
        if not isinstance(value, dict):
            self.report.error("E_TYPE", path, "expected object")
            return None
        return value

    def fields(self, data: dict, path: str, allowed: set[str]) -> None:
        for key in data:
            if key not in allowed:
                msg = f"unknown field {key!r}"
                if self.strict:
                    self.report.error("E_UNKNOWN_FIELD", f"{path}.{key}", msg)
                else:
                    self.report.warn("W_UNKNOWN_FIELD", f"{path}.{key}", msg)

    def get(self, data: dict, key: str, typ, path: str, required: bool = False, default=None):
        if key not in data:
            if required:
                self.report.error("E_MISSING_FIELD", f"{path}.{key}", f"missing required field {key!r}")
            return default
        value = data[key]
        if not _is_type(value, typ):
            name = _TYPE_NAMES.get(typ, str(typ))
            self.report.error("E_TYPE", f"{path}.{key}", f"expected {name}")
            return default
        return value

    def names(self, data: dict, key: str, path: str) -> tuple[str, ...]:
        raw = self.get(data, key, list, path, default=[])
        out = []
        for i, item in enumerate(raw):
            if isinstance(item, str):
                out.append(item)
            else:
                self.report.error("E_TYPE", f"{path}.{key}[{i}]", "expected string")
        return tuple(out)


def _parse_response(r: _Reader, data, path: str) -> ResponseDef | None:
    data = r.obj(data, path)
    if data is None:
        return None
    r.fields(data, path, {"id", "kind", "required", "parameters"})
    rid = r.get(data, "id", str, path, required=True)
    kind = r.get(data, "kind", str, path, required=True)
    required = r.get(data, "required", bool, path, default=True)
    params = r.get(data, "parameters", dict, path, default={})
    if rid is None or kind is None:
        return None
    return ResponseDef(rid, kind, required, params)


def _parse_component(r: _Reader, data, path: str) -> ComponentDef | None:
    data = r.obj(data, path)
    if data is None:
        return None
    r.fields(data, path, {"compType", "payload", "responses", "correctAnswers", "baseComponent"})
    responses = None
    if "responses" in data:
        raw = r.get(data, "responses", list, path)
        if raw is not None:
            parsed = [_parse_response(r, x, f"{path}.responses[{i}]") for i, x in enumerate(raw)]
            responses = tuple(x for x in parsed if x is not None)
    correct = r.get(data, "correctAnswers", dict, path)
    if correct is not None:
        for key, value in correct.items():
            if not _is_type(value, "scalar"):
                r.report.error("E_TYPE", f"{path}.correctAnswers.{key}", "expected scalar")
    return ComponentDef(
        compType=r.get(data, "compType", str, path),
        payload=r.get(data, "payload", dict, path),
        responses=responses,
        correctAnswers=correct,
        baseComponent=r.get(data, "baseComponent", str, path),
    )


def _parse_interruption(r: _Reader, data, path: str) -> InterruptionSpec | None:
    data = r.obj(data, path)
    if data is None:
        return None
    variant = r.get(data, "variant", str, path, required=True)
    if variant == "deterministic":
        r.fields(data, path, {"variant", "firstLocation", "spacing", "components"})
        first = r.get(data, "firstLocation", int, path, required=True)
        spacing = r.get(data, "spacing", int, path, required=True)
        names = r.names(data, "components", path)
        if first is None or spacing is None:
            return None
        return DeterministicInterruption(first, spacing, names)
    if variant == "random":
        r.fields(data, path, {"variant", "numInterruptions", "minGap", "components"})
        num = r.get(data, "numInterruptions", int, path, required=True)
        gap = r.get(data, "minGap", int, path, default=0)
        names = r.names(data, "components", path)
        if num is None or gap is None:
            return None
        return RandomInterruption(num, gap, names)
    if variant is not None:
        r.report.error("E_TYPE", f"{path}.variant", f"unknown interruption variant {variant!r}")
    return None


def _parse_skip(r: _Reader, data, path: str) -> SkipCondition | None:
    data = r.obj(data, path)
    if data is None:
        return None
    variant = r.get(data, "variant", str, path, required=True)
    if variant in ("blockCondition", "repeatedBlockCondition"):
        r.fields(data, path, {"variant", "blockId", "check", "threshold", "target"})
        block_id = r.get(data, "blockId", str, path, required=True)
        check = r.get(data, "check", str, path, required=True)
        threshold = r.get(data, "threshold", int, path, required=True)
        target = r.get(data, "target", str, path, required=True)
        if None in (block_id, check, threshold, target):
            return None
        return BlockCondition(block_id, check, threshold, target, variant == "repeatedBlockCondition")
    if variant == "responseCondition":
        r.fields(data, path, {"variant", "componentName", "responseId", "comparator", "value", "target"})
        name = r.get(data, "componentName", str, path, required=True)
        rid = r.get(data, "responseId", str, path, required=True)
        comp = r.get(data, "comparator", str, path, required=True)
        value = r.get(data, "value", "scalar", path, required=True)
        target = r.get(data, "target", str, path, required=True)
        if None in (name, rid, comp, target):
            return None
        return ResponseCondition(name, rid, comp, value, target)
    if variant is not None:
        r.report.error("E_TYPE", f"{path}.variant", f"unknown skip variant {variant!r}")
    return None


def _parse_block(r: _Reader, data, path: str) -> Block | None:
    data = r.obj(data, path)
    if data is None:
        return None
    r.fields(
        data,
        path,
        {"order", "components", "numSamples", "interruptions", "skip", "id", "strategy", "params"},
    )
    order = r.get(data, "order", str, path, required=True)
    raw_children = r.get(data, "components", list, path, default=[])
    children: list[str | Block] = []
    for i, child in enumerate(raw_children):
        cpath = f"{path}.components[{i}]"
        if isinstance(child, str):
            children.append(child)
        elif isinstance(child, dict):
            block = _parse_block(r, child, cpath)
            if block is not None:
                children.append(block)
        else:
            r.report.error("E_TYPE", cpath, "expected component name or block")
    interruptions = [
        _parse_interruption(r, x, f"{path}.interruptions[{i}]")
        for i, x in enumerate(r.get(data, "interruptions", list, path, default=[]))
    ]
    skips = [
        _parse_skip(r, x, f"{path}.skip[{i}]")
        for i, x in enumerate(r.get(data, "skip", list, path, default=[]))
    ]
    if order is None:
        return None
    return Block(
        order=order,
        components=tuple(children),
        numSamples=r.get(data, "numSamples", int, path),
        interruptions=tuple(x for x in interruptions if x is not None),
        skip=tuple(x for x in skips if x is not None),
        id=r.get(data, "id", str, path),
        strategy=r.get(data, "strategy", str, path),
        params=r.get(data, "params", dict, path),
    )


def parse_with_report(text: str, strict: bool = True) -> tuple[StudyConfig | None, ValidationReport]:
    """Parse a JSON document, returning the config (or None) and all findings."""
    report = ValidationReport()
    try:
        data = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        report.error("E_SYNTAX", "$", str(exc))
        return None, report
    r = _Reader(report, strict)
    data = r.obj(data, "$")
    if data is None:
        return None, report
    r.fields(data, "$", {"sequence", "components", "baseComponents", "importedLibraries", "studyMetadata"})

    def component_map(key: str) -> dict[str, ComponentDef]:
        raw = r.get(data, key, dict, "$", default={})
        out = {}
        for name, body in raw.items():
            comp = _parse_component(r, body, f"{key}.{name}")
            if comp is not None:
                out[name] = comp
        return out

    components = component_map("components")
    bases = component_map("baseComponents")
    libraries = r.names(data, "importedLibraries", "$")
    metadata = r.get(data, "studyMetadata", dict, "$", default={})
    for key, value in metadata.items():
        if not _is_type(value, "scalar"):
            report.error("E_TYPE", f"studyMetadata.{key}", "expected scalar")
    if "sequence" not in data:
        report.error("E_MISSING_FIELD", "sequence", "missing required field 'sequence'")
        return None, report
    sequence = _parse_block(r, data["sequence"], "sequence")
    if report.errors or sequence is None:
        return None, report
    config = StudyConfig(
        sequence=sequence,
        components=components,
        baseComponents=bases,
        importedLibraries=libraries,
        studyMetadata=metadata,
    )
    return config, report


def parse_study_config(text: str, strict: bool = True) -> StudyConfig:
    """Parse a configuration document; raises :class:`ConfigError` on failure."""
    config, report = parse_with_report(text, strict)
    if config is None:
        raise ConfigError(report)
    return config


def resolve_inheritance(config: StudyConfig) -> StudyConfig:
    """Merge each component with its named base (single level, shallow).

    Fields the child sets win; ``responses`` replace the base's list as a
    whole. Raises ``ConfigError`` with ``E_BASE_MISSING`` or ``E_BASE_CHAIN``.
    """
    report = ValidationReport()
    for name, base in config.baseComponents.items():
        if base.baseComponent is not None:
            report.error(
                "E_BASE_CHAIN",
                f"baseComponents.{name}.baseComponent",
                f"base component {name!r} names base {base.baseComponent!r}; only one level is allowed",
            )
    resolved = {}
    for name, comp in config.components.items():
        if comp.baseComponent is None:
            resolved[name] = comp
            continue
        base = config.baseComponents.get(comp.baseComponent)
        if base is None:
            report.error(
                "E_BASE_MISSING",
                f"components.{name}.baseComponent",
                f"base {comp.baseComponent!r} is not defined in baseComponents",
            )
            continue
        resolved[name] = ComponentDef(
            compType=comp.compType if comp.compType is not None else base.compType,
            payload=comp.payload if comp.payload is not None else base.payload,
            responses=comp.responses if comp.responses is not None else base.responses,
            correctAnswers=comp.correctAnswers if comp.correctAnswers is not None else base.correctAnswers,
        )
    if report.errors:
        raise ConfigError(report)
    return replace(config, components=resolved)
