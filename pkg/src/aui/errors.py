"""Exception hierarchy shared across the package."""


class AuiError(Exception):
    pass


class InvalidArgumentError(AuiError, ValueError):
    pass


class InvalidConfigError(AuiError, ValueError):
    pass


class ExhaustedTrajectoryError(AuiError):
    """Raised when every action of an imagined trajectory has been consumed."""


class EmptyBufferError(AuiError):
    pass


class InsufficientDataError(AuiError):
    pass


class EpisodeFinishedError(AuiError):
    pass


class CorruptCheckpointError(AuiError):
    pass


class MissingArtifactError(AuiError, FileNotFoundError):
    pass
