"""Wasserstein-robust expected utility portfolios and their large-radius limit."""

__version__ = "0.1.0"

from .errors import (BallViolation, ConfigError, DegenerateProbe, DegenerateSupport,  # noqa: F401
                     DualityGapError, IllPosed, InconsistentMetadata, InvalidArgument,
                     NotApplicable, NumericalFailure, RobustMinNormError)
from .market import (AmbiguitySpec, DiscreteMeasure, beta_star, construct_pstar,  # noqa: F401
                     dirac_mixture, moment_cp, na_check, shift_measure, wasserstein_discrete)
from .utility import UtilityFn, ae_report, check_admissibility  # noqa: F401
from .worstcase import inner_oracle, inner_value  # noqa: F401
from .robustopt import ConstraintSet, maximize, min_norm_points  # noqa: F401
from .asymptotics import convergence_report, sweep_k  # noqa: F401
