"""Exception types shared across the package."""

from __future__ import annotations


class StudyError(Exception):
    """Base error carrying a stable machine-readable code."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


class ConfigError(StudyError):
    """Raised when a configuration cannot be parsed or compiled.

    ``report`` holds the full :class:`~studyspec.config.ValidationReport`.
    """

    def __init__(self, report):
        first = report.errors[0] if report.errors else None
        code = first.code if first else "E_CONFIG"
        message = f"{first.path}: {first.message}" if first else ""
        super().__init__(code, message)
        self.report = report


class PoolError(StudyError):
    pass


class SequenceError(StudyError):
    pass


class SessionError(StudyError):
    pass


class StaircaseError(StudyError):
    pass


class LogError(StudyError):
    pass


class SimulationError(StudyError):
    def __init__(self, code: str, message: str = "", result=None):
        super().__init__(code, message)
        self.result = result
