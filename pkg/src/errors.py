"""
Error types raised across movierec.

Each one also derives from the built-in exception callers would naturally
catch (ValueError, KeyError, RuntimeError), so ``except ValueError`` keeps
working around loaders and models.
"""


class RecommenderError(Exception):
    """Base class for every movierec error."""


class InputLineError(RecommenderError, ValueError):
    """Bad input, optionally tied to a 1-based line of the source file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RatingParseError(InputLineError):
    """A ratings/features row could not be parsed (wrong arity, non-numeric value)."""


class RatingDomainError(InputLineError):
    """A value parsed fine but lies outside its allowed domain."""


class DuplicateEntryError(InputLineError):
    """The same (user, item) pair, or the same item id, appears twice."""


class UnknownIdError(RecommenderError, KeyError):
    """A user or item id is not part of the matrix or catalog."""

    def __str__(self):
        # KeyError quotes its argument; keep the message readable
        return str(self.args[0]) if self.args else ''


class InsufficientDataError(RecommenderError, ValueError):
    """Not enough observations to build the requested object."""


class TrainingError(RecommenderError, RuntimeError):
    """Training diverged (non-finite SSE or loss)."""
