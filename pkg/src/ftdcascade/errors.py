"""Exception types. The CLI maps them to exit codes."""


class DataError(ValueError):
    """Malformed or inconsistent input data (exit code 2)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (exit code 3)."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap.

    ``best`` carries whatever the solver produced at the last iterate.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
