"""Exception hierarchy shared across the package."""


class LookalikeError(Exception):
    """Base class for all package errors."""


class InvalidShape(LookalikeError):
    """Array dimensions outside what an operation supports."""


class ShapeError(LookalikeError):
    """Tensor shapes inconsistent with the model configuration."""


class OutOfBand(LookalikeError):
    """Frequency outside the covered band."""


class InvalidConfig(LookalikeError):
    """Configuration values that cannot be acted on."""


class DegenerateWindow(LookalikeError):
    """Window with zero variance; test statistic undefined."""


class EmptyDataset(LookalikeError):
    """An operation that needs data received none."""


class NumericalError(LookalikeError):
    """Non-finite values encountered where finite ones are required."""


class InvalidClustering(LookalikeError):
    """Label structure unusable for a clustering metric."""


class DegenerateCluster(LookalikeError):
    """Cluster whose members coincide; distance ratio undefined."""


class MissingFrequency(LookalikeError):
    """Query against an embedded index without a query frequency."""


class FormatError(LookalikeError):
    """Malformed binary file (bad magic, version, or truncation)."""
