class GeoCertError(Exception):
    """Base class for all errors raised by geocert."""


class InvalidTransformError(GeoCertError):
    pass


class SolverStalledError(GeoCertError):
    pass


class BudgetExhaustedError(GeoCertError):
    """Branch-and-bound hit its node cap.

    ``upper_bound`` is still a valid (looser) bound on the maximum violation,
    so callers may shift by it instead of giving up.
    """

    def __init__(self, message, upper_bound, xi_lower, nodes):
        super().__init__(message)
        self.upper_bound = upper_bound
        self.xi_lower = xi_lower
        self.nodes = nodes


class FormatError(GeoCertError):
    pass
