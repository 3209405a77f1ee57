"""Exception hierarchy shared by all modules."""


class PcmSarError(Exception):
    """Base class for all errors raised by pcmsar."""


class InvalidArgumentError(PcmSarError, ValueError):
    pass


class ConvergenceError(PcmSarError, RuntimeError):
    """Raised when an iterative solver hits its iteration cap.

    ``residual`` holds the last subspace change measured and ``partial``
    the best estimate available when iteration stopped.
    """

    def __init__(self, message, residual, partial=None):
        super().__init__(message)
        self.residual = residual
        self.partial = partial


class DegenerateBlockError(PcmSarError, ValueError):
    pass


class NoReferenceError(PcmSarError, RuntimeError):
    pass


class InsufficientDataError(PcmSarError, ValueError):
    pass


class NoPeriodicityError(PcmSarError, RuntimeError):
    pass


class NoSignalError(PcmSarError, ValueError):
    pass


class InsufficientBlocksError(PcmSarError, RuntimeError):
    pass


class CorruptFileError(PcmSarError, IOError):
    pass


class UnsupportedFormatError(PcmSarError, ValueError):
    pass
