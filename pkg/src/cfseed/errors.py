"""Exception types shared across the package."""


class CFSeedError(Exception):
    """Base class for every error this package raises deliberately."""


class ParseError(CFSeedError):
    """Malformed input row; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptyDatasetError(CFSeedError):
    """No interactions left (empty input, or filtering removed everything)."""


class DimensionError(CFSeedError):
    """Incompatible or out-of-range dimensionality."""


class StatisticsError(CFSeedError):
    """Not enough data to compute the requested statistic."""


class FormatError(CFSeedError):
    """Embedding file header or payload violates the binary format."""


class DataError(CFSeedError):
    """Non-finite or otherwise invalid numeric content."""


class AlignmentError(CFSeedError):
    """Embedding rows do not correspond to the expected index map."""


class ConfigError(CFSeedError):
    """Invalid run or loss configuration."""
