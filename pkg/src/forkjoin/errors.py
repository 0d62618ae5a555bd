"""Exception types shared across the package."""


class ForkJoinError(Exception):
    """Base class for all errors raised by :mod:`forkjoin`."""


class InvalidParameter(ForkJoinError, ValueError):
    def __init__(self, name, reason):
        self.name = name
        self.reason = reason
        super().__init__(f"{name}: {reason}")


class Unstable(ForkJoinError):
    """The arrival rate lies outside the stability region."""

    def __init__(self, lam, lambda_max):
        self.lam = lam
        self.lambda_max = lambda_max
        super().__init__(f"unstable: lambda={lam:.12g} >= lambda_max={lambda_max:.12g}")


class DegenerateRatio(ForkJoinError):
    pass


class EmptyStage(ForkJoinError, ValueError):
    def __init__(self, stage):
        self.stage = stage
        super().__init__(f"stage {stage} is empty; no departure possible")


class StateSpaceTooLarge(ForkJoinError):
    def __init__(self, count, cap):
        self.count = count
        self.cap = cap
        super().__init__(f"state space has at least {count} states (cap {cap})")


class NotConverged(ForkJoinError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")


class Reducible(ForkJoinError):
    pass


class NoCompletions(ForkJoinError):
    pass


class Infeasible(ForkJoinError):
    """No high-rate probability makes the system stable."""

    def __init__(self, lambda_max_at_p1):
        self.lambda_max_at_p1 = lambda_max_at_p1
        super().__init__(f"infeasible: lambda must be below {lambda_max_at_p1:.12g}")


class SlaInfeasible(ForkJoinError):
    def __init__(self, best_value, limit):
        self.best_value = best_value
        self.limit = limit
        super().__init__(
            f"SLA infeasible: best mean queries {best_value:.12g} at p=1 exceeds {limit:.12g}"
        )
