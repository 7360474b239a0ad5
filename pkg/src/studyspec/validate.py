"""Structural validation of inheritance-resolved study configurations."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .config import (
    CHECKS,
    COMP_TYPES,
    COMPARATORS,
    END,
    ORDERS,
    RESPONSE_KINDS,
    Block,
    BlockCondition,
    DeterministicInterruption,
    RandomInterruption,
    ResponseCondition,
    StudyConfig,
    ValidationReport,
    is_external,
    iter_blocks,
    parse_with_report,
    resolve_inheritance,
)
from .errors import ConfigError, SequenceError, StaircaseError

REACHABILITY_SAMPLES = 100
REACHABILITY_SEED = 0

_LIBRARY_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


def _check_name(report: ValidationReport, config: StudyConfig, name: str, path: str) -> None:
    if name in config.components:
        return
    if is_external(name):
        report.warn("W_EXTERNAL_COMPONENT", path, f"{name!r} is provided by an imported library and is not checked")
    else:
        report.error("E_UNDEFINED_COMPONENT", path, f"component {name!r} is not defined")


def _check_components(report: ValidationReport, config: StudyConfig) -> None:
    for name in sorted(config.baseComponents.keys() & config.components.keys()):
        report.error("E_NAME_COLLISION", f"baseComponents.{name}", f"{name!r} is both a base and a component")
    for i, lib in enumerate(config.importedLibraries):
        if not _LIBRARY_NAME.match(lib):
            report.error("E_BAD_LIBRARY_NAME", f"importedLibraries[{i}]", f"invalid library name {lib!r}")
    for name, comp in config.components.items():
        path = f"components.{name}"
        if comp.baseComponent is not None:
            report.error("E_BASE_UNRESOLVED", f"{path}.baseComponent", "inheritance has not been resolved")
        if comp.compType is None:
            report.error("E_MISSING_COMP_TYPE", path, "component has no compType")
        elif comp.compType not in COMP_TYPES:
            report.error("E_UNKNOWN_COMP_TYPE", f"{path}.compType", f"unknown compType {comp.compType!r}")
        seen = set()
        for j, resp in enumerate(comp.responses or ()):
            rpath = f"{path}.responses[{j}]"
            if resp.id in seen:
                report.error("E_DUPLICATE_RESPONSE_ID", f"{rpath}.id", f"response id {resp.id!r} repeats")
            seen.add(resp.id)
            if resp.kind not in RESPONSE_KINDS:
                report.error("E_UNKNOWN_RESPONSE_KIND", f"{rpath}.kind", f"unknown response kind {resp.kind!r}")
        for rid in comp.correctAnswers or {}:
            if rid not in seen:
                report.error("E_UNKNOWN_RESPONSE_ID", f"{path}.correctAnswers.{rid}", f"no response {rid!r}")


def _check_dynamic(report: ValidationReport, config: StudyConfig, block: Block, cpath: str) -> None:
    from .runtime import STRATEGIES, StaircaseStrategy

    if block.id is None:
        report.error("E_BLOCK_ID_REQUIRED", cpath, "dynamic blocks need an id")
    if block.strategy not in STRATEGIES:
        report.error("E_UNKNOWN_STRATEGY", f"{cpath}.strategy", f"unknown dynamic strategy {block.strategy!r}")
        return
    try:
        params, extra = StaircaseStrategy.split_params(block)
        params.validate()
    except StaircaseError as exc:
        report.error("E_BAD_STRATEGY_PARAMS", f"{cpath}.params", exc.message)
        return
    for key in ("trialComponent", "attentionComponent"):
        name = extra.get(key)
        if name is None:
            report.error("E_BAD_STRATEGY_PARAMS", f"{cpath}.params", f"no {key} given or inferable")
        elif key in (block.params or {}):
            _check_name(report, config, name, f"{cpath}.params.{key}")


def _check_blocks(report: ValidationReport, config: StudyConfig) -> None:
    block_ids = set()
    paths = set()
    for block, path, cpath in iter_blocks(config.sequence):
        if path in paths:
            report.error("E_DUPLICATE_BLOCK_PATH", cpath, f"block path {path!r} is not unique")
        paths.add(path)
        if block.id is not None:
            if block.id.isdigit() or "/" in block.id or block.id in ("", END):
                report.error("E_BAD_BLOCK_ID", f"{cpath}.id", f"block id {block.id!r} is reserved or malformed")
            block_ids.add(block.id)
        if block.order not in ORDERS:
            report.error("E_BAD_ORDER", f"{cpath}.order", f"unknown order {block.order!r}")
        n_children = len(block.components)
        if block.order == "dynamic":
            _check_dynamic(report, config, block, cpath)
        elif n_children == 0:
            report.error("E_EMPTY_BLOCK", f"{cpath}.components", "block has no components")
        if block.numSamples is not None:
            if block.numSamples < 1:
                report.error("E_BAD_NUMSAMPLES", f"{cpath}.numSamples", "numSamples must be positive")
            elif block.order != "dynamic" and block.numSamples > n_children:
                report.error(
                    "E_NUMSAMPLES_EXCEEDS",
                    f"{cpath}.numSamples",
                    f"numSamples {block.numSamples} exceeds {n_children} children",
                )
        for i, child in enumerate(block.components):
            if isinstance(child, str):
                _check_name(report, config, child, f"{cpath}.components[{i}]")
        for i, spec in enumerate(block.interruptions):
            ipath = f"{cpath}.interruptions[{i}]"
            if isinstance(spec, DeterministicInterruption):
                if spec.spacing < 2:
                    report.error("E_BAD_SPACING", f"{ipath}.spacing", f"spacing {spec.spacing} leaves no room for items")
                if spec.firstLocation < 0:
                    report.error("E_BAD_FIRST_LOCATION", f"{ipath}.firstLocation", "firstLocation must be >= 0")
            elif isinstance(spec, RandomInterruption):
                if spec.numInterruptions < 1:
                    report.error("E_BAD_NUM_INTERRUPTIONS", f"{ipath}.numInterruptions", "numInterruptions must be >= 1")
                if spec.minGap < 0:
                    report.error("E_BAD_MIN_GAP", f"{ipath}.minGap", "minGap must be >= 0")
            if not spec.components:
                report.error("E_EMPTY_INTERRUPTION", f"{ipath}.components", "interruption names no components")
            for j, name in enumerate(spec.components):
                _check_name(report, config, name, f"{ipath}.components[{j}]")
    for block, path, cpath in iter_blocks(config.sequence):
        for i, cond in enumerate(block.skip):
            spath = f"{cpath}.skip[{i}]"
            if isinstance(cond, BlockCondition):
                if cond.check not in CHECKS:
                    report.error("E_BAD_CHECK", f"{spath}.check", f"unknown check {cond.check!r}")
                if cond.threshold < 1:
                    report.error("E_BAD_THRESHOLD", f"{spath}.threshold", "threshold must be positive")
                if cond.blockId not in block_ids:
                    report.error("E_UNDEFINED_BLOCK", f"{spath}.blockId", f"no block with id {cond.blockId!r}")
            elif isinstance(cond, ResponseCondition):
                if cond.comparator not in COMPARATORS:
                    report.error("E_BAD_COMPARATOR", f"{spath}.comparator", f"unknown comparator {cond.comparator!r}")
                comp = config.components.get(cond.componentName)
                if comp is None:
                    _check_name(report, config, cond.componentName, f"{spath}.componentName")
                elif cond.responseId not in comp.response_ids():
                    report.error("E_UNKNOWN_RESPONSE_ID", f"{spath}.responseId", f"no response {cond.responseId!r}")
            target = cond.target
            if target == END:
                continue
            is_comp = target in config.components
            is_block = target in block_ids
            if is_comp and is_block:
                report.error("E_AMBIGUOUS_TARGET", f"{spath}.target", f"{target!r} names both a component and a block")
            elif not (is_comp or is_block):
                report.error("E_UNDEFINED_TARGET", f"{spath}.target", f"skip target {target!r} is not defined")


def _check_reachability(report: ValidationReport, config: StudyConfig) -> None:
    from .sequencer import realize_sequence

    skipping = [(block, path, cpath) for block, path, cpath in iter_blocks(config.sequence) if block.skip]
    failing: dict[str, str] = {}
    for index in range(REACHABILITY_SAMPLES):
        try:
            seq = realize_sequence(config, index, REACHABILITY_SEED)
        except SequenceError as exc:
            report.error(exc.code, "sequence", f"participant {index}: {exc.message}")
            return
        for block, path, cpath in skipping:
            positions = [
                i for i, it in enumerate(seq.items)
                if it.blockPath == path or it.blockPath.startswith(path + "/")
            ]
            if not positions:
                continue
            last = max(positions)
            for i, cond in enumerate(block.skip):
                spath = f"{cpath}.skip[{i}]"
                if cond.target == END or spath in failing:
                    continue
                later = seq.items[last + 1:]
                if not any(
                    (not it.dynamic and it.componentName == cond.target)
                    or cond.target in it.blockPath.split("/")
                    for it in later
                ):
                    failing[spath] = f"participant {index}"
    for spath, who in failing.items():
        report.error(
            "E_SKIP_TARGET_UNREACHABLE",
            f"{spath}.target",
            f"target does not follow the block in the realization for {who}",
        )


def validate_config(config: StudyConfig) -> ValidationReport:
    """Every structural violation of a resolved config; empty errors means compilable."""
    report = ValidationReport()
    _check_components(report, config)
    _check_blocks(report, config)
    if not report.errors:
        _check_reachability(report, config)
    return report


@dataclass
class CompiledStudy:
    raw: StudyConfig
    config: StudyConfig
    report: ValidationReport


def check_study(text: str, strict: bool = True) -> tuple[CompiledStudy | None, ValidationReport]:
    """Parse, resolve and validate; returns the compiled study when error free."""
    raw, report = parse_with_report(text, strict)
    if raw is None:
        return None, report
    try:
        resolved = resolve_inheritance(raw)
    except ConfigError as exc:
        report.extend(exc.report)
        return None, report
    report.extend(validate_config(resolved))
    if report.errors:
        return None, report
    return CompiledStudy(raw, resolved, report), report


def compile_study(text: str, strict: bool = True) -> CompiledStudy:
    """Like :func:`check_study` but raises :class:`ConfigError` on errors."""
    compiled, report = check_study(text, strict)
    if compiled is None:
        raise ConfigError(report)
    return compiled


def load_study(path, strict: bool = True) -> CompiledStudy:
    with open(path, encoding="utf-8") as fh:
        return compile_study(fh.read(), strict)
