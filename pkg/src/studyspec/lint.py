"""Design-hygiene warnings for configurations that already validate."""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import Finding, StudyConfig, iter_blocks, resolve_inheritance


@dataclass
class LintReport:
    findings: list[Finding] = field(default_factory=list)

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    def to_dict(self) -> dict:
        return {"findings": [f.to_dict() for f in self.findings]}


def _referenced_names(config: StudyConfig) -> set[str]:
    names: set[str] = set()
    for block, _, _ in iter_blocks(config.sequence):
        names.update(c for c in block.components if isinstance(c, str))
        for spec in block.interruptions:
            names.update(spec.components)
        for cond in block.skip:
            if cond.target != "end":
                names.add(cond.target)
        for key in ("trialComponent", "attentionComponent"):
            value = (block.params or {}).get(key)
            if isinstance(value, str):
                names.add(value)
    return names


def lint(config: StudyConfig) -> LintReport:
    """Warnings for a parsed (not necessarily resolved) config, sorted by path then code."""
    findings: list[Finding] = []
    referenced = _referenced_names(config)
    for name in config.components:
        if name not in referenced:
            findings.append(Finding("W_UNUSED_COMPONENT", f"components.{name}", f"component {name!r} is never used", "warn"))
    used_bases = {c.baseComponent for c in config.components.values() if c.baseComponent}
    for name in config.baseComponents:
        if name not in used_bases:
            findings.append(Finding("W_UNUSED_BASE", f"baseComponents.{name}", f"base component {name!r} is never inherited", "warn"))
    resolved = resolve_inheritance(config)
    for name, comp in resolved.components.items():
        if comp.compType == "form" and not comp.responses:
            findings.append(Finding("W_NO_RESPONSES", f"components.{name}", f"form {name!r} collects no responses", "warn"))
    for block, _, cpath in iter_blocks(config.sequence):
        if block.order == "dynamic" and not block.components:
            findings.append(
                Finding("W_EMPTY_BLOCK", f"{cpath}.components", "dynamic block lists no components; its strategy supplies all trials", "warn")
            )
        if block.order == "latinSquare" and len(block.components) == 1:
            findings.append(
                Finding("W_SINGLE_CHILD_LATIN", cpath, "Latin square over a single child does not counterbalance anything", "warn")
            )
        children = {c for c in block.components if isinstance(c, str)}
        for i, spec in enumerate(block.interruptions):
            shared = sorted(children & set(spec.components))
            if shared:
                findings.append(
                    Finding(
                        "W_INTERRUPTION_SHADOWS_NUMSAMPLES",
                        f"{cpath}.interruptions[{i}]",
                        f"interruption components {shared} are also block children",
                        "warn",
                    )
                )
    findings.sort(key=lambda f: (f.path, f.code))
    return LintReport(findings)


def audit(text: str, strict: bool = True) -> tuple[bool, list[Finding]]:
    """Validation findings plus lint warnings for a configuration document.

    Returns ``(compilable, findings)``; lint rules only run on documents that
    compile.
    """
    from .validate import check_study

    compiled, report = check_study(text, strict)
    if compiled is None:
        return False, sorted(report.errors + report.warnings, key=lambda f: (f.path, f.code))
    findings = report.warnings + lint(compiled.raw).findings
    return True, sorted(findings, key=lambda f: (f.path, f.code))
