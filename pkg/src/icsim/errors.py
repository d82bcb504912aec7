"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""

    code = "contract-violation"


class DegenerateDenominatorError(ContractViolation):
    """The normal operating curve integrates to zero over the analysis window."""

    code = "degenerate-denominator"


class InsufficientTraceError(ContractViolation):
    """A trace is too short or too flat to extract a control cycle from."""

    code = "insufficient-trace"


class IngestionError(ContractViolation):
    """A historical dataset could not be read or mapped onto the plant."""

    code = "ingestion-error"
