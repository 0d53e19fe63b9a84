"""Exception hierarchy shared by every layer of the package."""


class PrivInferError(Exception):
    """Base class for all package errors."""


class ValidationError(PrivInferError, ValueError):
    """Input failed a precondition (non-finite values, bad config, ...)."""


class ShapeMismatchError(ValidationError):
    pass


class DuplicateRoleError(PrivInferError):
    pass


class TransportError(PrivInferError):
    pass


class ChannelClosedError(TransportError):
    pass


class DecodeError(TransportError):
    pass


class VersionMismatchError(TransportError):
    pass


class SessionTimeoutError(TransportError, TimeoutError):
    pass


class StepMismatchError(TransportError):
    """The two sides of an exchange were not executing the same step."""


class StagingError(PrivInferError):
    """Offline material is missing, exhausted or was already consumed."""


class MaskExhaustedError(StagingError):
    pass


class MaskReuseError(StagingError):
    pass


class InsecureParamsError(ValidationError):
    pass
