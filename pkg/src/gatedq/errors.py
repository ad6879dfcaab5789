"""Exception types shared across the solvers and the CLI."""


class ConfigError(ValueError):
    """Invalid model parameters or configuration."""


class UnstableModel(ConfigError):
    """The model violates rho < 1 (or has an infinite mean vacation)."""

    def __init__(self, rho: float, mean_vacation: float):
        self.rho = rho
        self.mean_vacation = mean_vacation
        super().__init__(
            f"model is unstable: rho = {rho:.6g} (must be < 1), "
            f"E[V] = {mean_vacation:.6g}"
        )


class NonConvergence(RuntimeError):
    """A truncated series or product did not reach its tolerance."""
