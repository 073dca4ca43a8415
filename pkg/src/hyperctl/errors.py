"""Exception hierarchy.  Each class carries the process exit code the CLI uses."""


class HyperCtlError(Exception):
    exit_code = 1


class InvalidSpecError(HyperCtlError, ValueError):
    exit_code = 2


class NonConvergenceError(HyperCtlError):
    exit_code = 3

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class DeltaTooLargeError(NonConvergenceError):
    """Contraction-based control failed: the window length is too large."""


class ExceptionalGammaError(HyperCtlError):
    exit_code = 4

    def __init__(self, message, condition_number):
        super().__init__(message)
        self.condition_number = condition_number


class NotAdmissibleError(InvalidSpecError):
    """Boundary matrix outside the admissible class; names the failing minor."""

    def __init__(self, message, failing_minor=None):
        super().__init__(message)
        self.failing_minor = failing_minor


class InfeasibleError(HyperCtlError):
    exit_code = 5
