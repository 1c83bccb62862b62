"""Numerical laboratory for profile cut-off of small-noise 1-D gradient diffusions."""

__version__ = "0.1.0"

from .errors import (ConfigError, CutoffError, GridError, IntegrationError,
                     NonFiniteResultError, NotCoerciveError, NotRegularError,
                     PotentialError, ScheduleError, SimulationError,
                     TrajectoryRangeError)
from .gaussian import (CutoffSchedule, GaussianLaw, kl_normal, profile, schedule,
                       tv_normal, tv_unit)
from .potentials import (Classification, PotentialSpec, builtin, classify,
                         double_well, quadratic, quartic, smooth_truncate)
from .semiflow import (ConstantsReport, SemiflowTrajectory, integrate_semiflow,
                       limit_constants, variance_limit)
