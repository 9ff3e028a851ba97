"""Shared exception and warning types."""


class DataFormatError(Exception):
    """A data file is malformed or inconsistent with its header."""


class BadMagicError(DataFormatError):
    """The file does not start with the expected magic string."""


class TruncatedPayloadError(DataFormatError):
    """The binary payload is shorter than the header dimensions require."""


class DimensionMismatchError(DataFormatError):
    """Header dimensions and actual content disagree."""


class CsvParseError(DataFormatError):
    """A CSV cell could not be parsed."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped before reaching its tolerance."""


class RankWarning(UserWarning):
    """Requested CP rank exceeds the row count of some mode unfolding."""


class PurePixelWarning(UserWarning):
    """A pure-pixel set came out empty for at least one endmember."""
