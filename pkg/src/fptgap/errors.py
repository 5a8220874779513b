class ParameterError(ValueError):
    """A parameter is outside the operation's precondition."""


class BudgetExceeded(RuntimeError):
    """An enumeration or construction would exceed a configured cap."""

    def __init__(self, what: str, size: int, cap: int):
        super().__init__(f"refusing: {what} = {size} exceeds cap {cap}")
        self.what = what
        self.size = size
        self.cap = cap
