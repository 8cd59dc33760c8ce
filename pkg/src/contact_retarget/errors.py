"""Exception hierarchy shared by all modules."""


class ContactRetargetError(Exception):
    """Base class for every error raised by this package."""


class ParseError(ContactRetargetError, ValueError):
    """A config or data file could not be parsed."""


class SchemaError(ParseError):
    """A file parsed but does not follow the expected schema."""


class InvalidScene(ContactRetargetError, ValueError):
    """A scene violates one of its invariants."""


class MissingWall(ContactRetargetError, ValueError):
    """An operation needs a wall but the scene has none."""


class Infeasible(ContactRetargetError):
    """A constraint system has no solution the solver could find.

    ``index`` is set by callers that iterate over contact switches.
    """

    def __init__(self, message: str = "", index: int | None = None):
        super().__init__(message)
        self.index = index


class Unreachable(Infeasible):
    """A target lies outside the workspace or cannot be approached."""


class TooWide(Infeasible):
    """No horizontal object thickness fits between the fingers."""


class NoClearance(Infeasible):
    """The wall leaves no room for a finger next to the object."""


class WorkspaceViolation(ContactRetargetError):
    """A simulation step would move the gripper out of its workspace."""


class PolicyFailure(ContactRetargetError):
    """Raised by a policy that cannot continue; ``reason`` becomes the outcome."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason
