# src/errors.py
"""Exception hierarchy shared by the solver, the analysis kit and the harness."""


class FracdriftError(Exception):
    """Base class; the CLI turns any of these into a logged error and exit status 2."""


class ConfigurationError(FracdriftError, ValueError):
    pass


class ParameterError(FracdriftError, ValueError):
    pass


class FieldValidationError(FracdriftError, ValueError):
    pass


class UnsupportedOperationError(FracdriftError, ValueError):
    pass


class ShapeError(FracdriftError, ValueError):
    pass


class ResolutionError(FracdriftError, ValueError):
    pass


class SnapshotFormatError(FracdriftError, ValueError):
    pass


class MoleculeConditionError(ConfigurationError):
    """An r-molecule parameter window condition does not hold."""


class CFLViolation(FracdriftError, RuntimeError):
    def __init__(self, message: str, advisory_dt: float):
        super().__init__(message)
        self.advisory_dt = advisory_dt


class SolverAbort(FracdriftError, RuntimeError):
    def __init__(self, message: str, last_good=None):
        super().__init__(message)
        # last finite SolverState before the blow-up
        self.last_good = last_good


class HistoryGapError(FracdriftError, RuntimeError):
    pass


class PicardDivergenceError(FracdriftError, RuntimeError):
    def __init__(self, message: str, ratios=None):
        super().__init__(message)
        self.ratios = list(ratios or [])


class ConstructionError(FracdriftError, RuntimeError):
    pass


class MaximumPrincipleRegime(FracdriftError, ArithmeticError):
    """Target function reached 1: the maximum principle takes over from the ledger."""

    def __init__(self, message: str, value: float):
        super().__init__(message)
        self.value = value
