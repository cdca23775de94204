"""Exception hierarchy shared across the toolkit."""


class GvcotError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(GvcotError, ValueError):
    pass


class LengthMismatch(GvcotError, ValueError):
    pass


class ContractViolation(GvcotError, ValueError):
    """A documented precondition was not met by the caller."""


class ParseFailure(GvcotError):
    """A judge response could not be parsed. The raw text is kept for audit."""

    def __init__(self, message: str, text: str = ""):
        super().__init__(message)
        self.text = text


class UnknownCategory(ParseFailure):
    pass


class MissingSlot(GvcotError):
    pass


class BadStatus(GvcotError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"endpoint returned HTTP {status}")
        self.status = status
        self.body = body


class JudgeUnavailable(GvcotError):
    """Transport-level failure after the retry budget was spent."""


class GroupTooSmall(GvcotError, ValueError):
    pass


class IncompleteGroup(GvcotError):
    def __init__(self, sample_id: str, found: int, expected: int):
        super().__init__(f"group {sample_id!r} has {found} rollouts, expected {expected}")
        self.sample_id = sample_id
        self.found = found
        self.expected = expected


class EmptySet(GvcotError, ValueError):
    pass


class NoVotes(GvcotError, ValueError):
    pass


class ZeroVector(GvcotError, ValueError):
    pass


class ImageTooSmall(GvcotError, ValueError):
    pass


class NonFiniteLoss(GvcotError, FloatingPointError):
    pass


class NonFiniteState(GvcotError, FloatingPointError):
    pass
