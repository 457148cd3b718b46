"""Exception types shared across the package.

Two families matter to callers: contract violations (bad inputs, broken
invariants, degenerate configurations) and reconstruction failures
(optimizer did not converge). The CLI maps them to exit codes 2 and 3.
"""


class ContractError(ValueError):
    """An input or intermediate result violates a documented contract."""


class ReconstructionError(RuntimeError):
    """Density-matrix reconstruction failed to converge.

    Carries the best iterate found so callers can inspect it.
    """

    def __init__(self, message, best_rho=None, diagnostics=None):
        super().__init__(message)
        self.best_rho = best_rho
        self.diagnostics = diagnostics
