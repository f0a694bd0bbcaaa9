"""
Exception hierarchy — every error the processor raises derives from
XQFlowError and carries the process exit code the CLI reports.
"""

from __future__ import annotations

EXIT_SYNTAX = 2
EXIT_STATIC = 3
EXIT_RUNTIME = 4


class XQFlowError(Exception):
    """Base class; ``exit_code`` is what ``cli.py`` returns."""

    exit_code = EXIT_RUNTIME

    def __reduce__(self):
        # subclasses take structured constructor arguments; rebuild from state
        return _restore, (type(self), self.args, self.__dict__)


def _restore(cls: type, args: tuple, state: dict) -> XQFlowError:
    err = Exception.__new__(cls)
    err.args = args
    err.__dict__.update(state)
    return err


# ── Syntax (exit 2) ──────────────────────────────────────────────────

class LexError(XQFlowError):
    exit_code = EXIT_SYNTAX

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class QuerySyntaxError(XQFlowError):
    exit_code = EXIT_SYNTAX

    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()) -> None:
        detail = f"{message} at offset {offset}"
        if expected:
            detail += f" (expected one of: {', '.join(sorted(expected))})"
        super().__init__(detail)
        self.offset = offset
        self.expected = expected


class PlanSyntaxError(XQFlowError):
    exit_code = EXIT_SYNTAX

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


# ── Static and type errors (exit 3) ──────────────────────────────────

class BindError(XQFlowError):
    exit_code = EXIT_STATIC

    def __init__(self, name: str, message: str | None = None) -> None:
        super().__init__(message or f"unbound variable ${name}")
        self.name = name


class XQueryTypeError(XQFlowError):
    """Dynamic or static type error; ``code`` follows the W3C error names."""

    exit_code = EXIT_STATIC

    def __init__(self, message: str, code: str = "XPTY0004") -> None:
        super().__init__(f"[{code}] {message}")
        self.code = code


class TranslationError(XQFlowError):
    exit_code = EXIT_STATIC


class ConfigError(XQFlowError):
    exit_code = EXIT_STATIC


# ── Runtime and I/O (exit 4) ─────────────────────────────────────────

class ParseError(XQFlowError):
    def __init__(self, message: str, path: str | None = None, offset: int | None = None) -> None:
        where = path or "<bytes>"
        if offset is not None:
            where += f" @ byte {offset}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.offset = offset


class IngestIoError(XQFlowError):
    def __init__(self, message: str, path: str | None = None) -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class FrameOverflow(XQFlowError):
    def __init__(self, size: int, capacity: int) -> None:
        super().__init__(
            f"tuple of {size} bytes does not fit in a frame of {capacity} bytes"
        )
        self.size = size
        self.capacity = capacity


class SpillIoError(XQFlowError):
    pass


class RuleError(XQFlowError):
    def __init__(self, rule: str, message: str) -> None:
        super().__init__(f"rule {rule} produced an invalid plan: {message}")
        self.rule = rule


class PhysicalPlanError(XQFlowError):
    pass


class ExecutionError(XQFlowError):
    """A worker failed; the original error is kept as ``__cause__``."""

    def __init__(self, message: str, partition: int | None = None, exit_code: int = EXIT_RUNTIME) -> None:
        prefix = f"partition {partition}: " if partition is not None else ""
        super().__init__(prefix + message)
        self.partition = partition
        self.exit_code = exit_code
