"""Exception hierarchy shared by the combsynth modules."""


class CombsynthError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CombsynthError):
    """A combiner was applied to a string outside its legal domain."""


class StructureError(DomainError):
    """A string helper did not find the delimiter or line structure it needs."""


class CombinerOverflowError(DomainError, OverflowError):
    """``add`` produced a value outside the signed 64-bit range."""


class ParseError(CombsynthError):
    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} at position {position}")
        self.position = position


class ExecError(CombsynthError):
    """A subprocess needed by ``rerun``/``merge`` or by a pipeline stage failed."""


class CommandTimeout(ExecError):
    pass


class NonZeroExit(ExecError):
    def __init__(self, command: str, code: int, stderr: bytes) -> None:
        excerpt = stderr[:200].decode("utf-8", "replace").strip()
        super().__init__(f"{command!r} exited with status {code}: {excerpt}")
        self.code = code
        self.stderr = stderr


class SpawnError(ExecError):
    pass


class NondeterministicCommand(ExecError):
    """Re-running a command on the same input produced different bytes."""


class GenError(CombsynthError):
    """An input shape cannot be satisfied with the available dictionary."""


class ProbeError(CombsynthError):
    """The command rejected every probe input stream."""


class UnsupportedCommand(ProbeError):
    pass


class NotRepresentative(CombsynthError):
    """``enough_for`` was asked about a combiner outside the representative sets."""


class EmptyIntersection(CombsynthError):
    """No input pair in the intersection of two combiner domains was found."""


class UnsupportedSyntax(CombsynthError):
    def __init__(self, message: str, position: int | None = None) -> None:
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}")
        self.position = position
