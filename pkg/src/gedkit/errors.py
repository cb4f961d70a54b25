"""Exception hierarchy shared by all gedkit modules."""


class GedkitError(Exception):
    """Base class for all errors raised by gedkit."""


class ParseError(GedkitError):
    """Malformed input data (M2 blocks, parallel files, vector files).

    Carries enough location context to point at the offending line.
    """

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif path is not None:
            where += " "
        super().__init__(where + message)


class ValidationError(GedkitError):
    """A contract violation in otherwise well-formed data (bad spans, empty corpus, ...)."""


class StoreLookupError(GedkitError):
    """A (sentence id, token index) pair is missing from a contextual vector store."""

    def __init__(self, sid: str, index: int):
        self.sid = sid
        self.index = index
        super().__init__(
            f"no contextual vector for sentence {sid!r}, token {index} "
            "(corpus/store mismatch; re-extract the store for this corpus)"
        )


class NumericError(GedkitError):
    """Non-finite values encountered where finite numbers are required."""


class CheckpointError(GedkitError):
    """A model checkpoint cannot be read or does not match the requested configuration."""
