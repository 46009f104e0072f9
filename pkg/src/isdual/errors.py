"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class InfeasibleError(ValueError):
    """A polytope has no feasible point."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""


class NonFiniteGradientError(FloatingPointError):
    """A stochastic gradient evaluated to NaN or infinity during a run."""

    def __init__(self, iteration, trajectory, sample, mu):
        self.iteration = iteration
        self.trajectory = trajectory
        self.sample = sample
        self.mu = mu
        super().__init__(
            f"non-finite gradient at iteration {iteration} "
            f"(trajectory {trajectory}, sample={sample!r}, mu={mu!r})"
        )
