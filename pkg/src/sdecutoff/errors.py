"""Exception hierarchy shared by all engines."""


class CutoffError(Exception):
    """Base class for every error raised by this package."""


class PotentialError(CutoffError):
    """A potential is mis-specified or outside the class an operation needs."""


class NotRegularError(PotentialError):
    pass


class NotCoerciveError(PotentialError):
    pass


class NonFiniteResultError(PotentialError):
    """An evaluator returned NaN or inf."""


class IntegrationError(CutoffError):
    """ODE step-size underflow, quadrature non-convergence, or a failed cross-check."""


class ScheduleError(CutoffError):
    """Requested cut-off times are not positive for the given noise level."""


class TrajectoryRangeError(CutoffError):
    pass


class GridError(CutoffError):
    """Density grid problems: mismatch, leakage, negativity, mass drift."""


class SimulationError(CutoffError):
    """Path blow-up or an undersized ensemble."""


class ConfigError(CutoffError):
    """Experiment configuration failed validation.

    ``problems`` holds every validation message, not just the first.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
