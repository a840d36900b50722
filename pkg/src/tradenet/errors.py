"""Exception types shared across the package."""


class TradenetError(Exception):
    """Base class for all tradenet errors."""


class EdgeDataError(TradenetError):
    """Invalid edge data: self-loops, nonpositive or non-finite weights."""


class UndefinedStatisticError(TradenetError):
    """A statistic has no defined value on the given input."""


class SeparationError(TradenetError):
    """A binary response model cannot be estimated: perfect separation or a
    single-class response."""


class RankDeficiencyError(TradenetError):
    """A design matrix is rank deficient; ``columns`` names the dependent ones."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "design matrix is rank deficient; dependent columns: "
            + ", ".join(self.columns)
        )


class ConvergenceError(TradenetError):
    """An iterative fit exhausted its iteration budget without converging."""


class PipelineError(TradenetError):
    """A pipeline stage failed hard; the message names the stage."""
