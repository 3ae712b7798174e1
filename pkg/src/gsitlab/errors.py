"""Exception types shared across the package."""


class GsitError(Exception):
    """Base class for all errors raised by gsitlab."""


class ShapeError(GsitError, ValueError):
    pass


class DegenerateRowError(GsitError, ValueError):
    """A softmax row had no finite entry (every column masked out)."""

    def __init__(self, row: int, context: str = ""):
        self.row = row
        msg = f"row {row} has no finite entries"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class ContractError(GsitError, ValueError):
    pass


class DegenerateDistributionError(GsitError, ValueError):
    pass


class AccountingError(GsitError, RuntimeError):
    """A meter was used outside the single-pass protocol."""


class ReconciliationError(GsitError, AssertionError):
    def __init__(self, phases: dict):
        self.phases = phases
        listing = ", ".join(f"{k}: measured={m} predicted={p}" for k, (m, p) in phases.items())
        super().__init__(f"phase mismatch: {listing}")


class TrainingDiverged(GsitError, FloatingPointError):
    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"loss became non-finite ({loss}) at step {step}")
