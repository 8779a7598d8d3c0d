"""
Exception hierarchy shared by the library, the CLI and the API routers.
"""

from typing import Optional, Tuple


class ImputationError(Exception):
    """Base class for every error raised by this package"""


class ConfigurationError(ImputationError, ValueError):
    """Invalid parameters, designs or inputs (CLI exit code 2, HTTP 422)"""


class NumericalError(ImputationError, ArithmeticError):
    """Numerical failure such as a singular Gram matrix (CLI exit code 3, HTTP 500)"""


class RankDeficientError(NumericalError):
    """Gram matrix is numerically singular"""

    def __init__(self, message: str, rank: int, p: int):
        super().__init__(f"{message} (numerical rank {rank} < p={p})")
        self.rank = rank
        self.p = p
        self._message = message

    def __reduce__(self):
        return (type(self), (self._message, self.rank, self.p))


class DegeneratePosteriorError(NumericalError):
    """Posterior scale for sigma^2 is zero, so no valid draw exists"""


class ReplicateError(NumericalError):
    """A Monte Carlo replicate failed; carries enough provenance to rerun it"""

    def __init__(self, cell: str, replicate: int, seed_path: Tuple[int, ...], cause: Optional[Exception] = None):
        self.cell = cell
        self.replicate = replicate
        self.seed_path = tuple(seed_path)
        self.cause = cause
        detail = f": {cause}" if cause is not None else ""
        super().__init__(
            f"replicate {replicate} of cell {cell} failed (seed path {self.seed_path}){detail}"
        )

    def __reduce__(self):
        return (type(self), (self.cell, self.replicate, self.seed_path, self.cause))
