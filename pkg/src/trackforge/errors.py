"""Exception types shared across the toolkit."""


class TrackforgeError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(TrackforgeError, ValueError):
    """Invalid value, configuration, or state (bad angles, thresholds, specs...)."""


class ParseError(TrackforgeError, ValueError):
    """Malformed input file.  Carries file position context when available."""

    def __init__(self, message, *, path=None, line=None, row=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if row is not None:
            where.append(f"row {row}")
        if where:
            message = f"{': '.join(where)}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line
        self.row = row


class ProtocolError(TrackforgeError):
    """Capture-protocol invariant broken (unequal frame counts, lock violation)."""


class UndefinedMetricError(TrackforgeError):
    """A metric's denominator is empty; returning a number would be misleading."""
