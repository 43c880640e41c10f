"""Exception taxonomy shared by all modules."""


class AdnetError(Exception):
    """Base class for every error this package raises deliberately."""


class ConfigError(AdnetError):
    """Invalid hyperparameters or incompatible tensor shapes."""


class InputError(AdnetError):
    """Runtime data violates a precondition (lengths, ranges, coverage)."""


class UsageError(AdnetError):
    """API called out of order, e.g. backward before any forward pass."""


class FormatError(AdnetError):
    """An on-disk artifact is malformed; message carries file and location."""

    def __init__(self, path, message, offset=None):
        where = str(path) if offset is None else f"{path} @ byte {offset}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.offset = offset


class CheckpointError(AdnetError):
    """A checkpoint is readable but incompatible with the requested model."""


class MetricError(AdnetError):
    """A metric is undefined for the given input (e.g. single-class AUC)."""


class NumericError(AdnetError):
    """A NaN or infinity surfaced where finite values are guaranteed."""


class InternalError(AdnetError):
    """An invariant the library maintains itself was broken; report a bug."""
