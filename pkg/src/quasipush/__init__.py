"""Quasi-static stochastic contact model for planar pushing and grasping."""
from .exceptions import (ConfigError, CycleDetected, DegenerateData, NoConvergence, NotPSD, OverlapError,
                         QuasiPushError, SingularD, ZeroTwist, ZeroWrench)
from .geometry import ContactPoint, Finger, Pose, PusherGeometry, Shape, detect_contacts, integrate_pose, pose_deviation
from .lemke import lemke_solve
from .limit_surface import (LimitSurfaceRegressor, Normalization, QuadraticLS, QuarticLS, fit_quadratic,
                            lift_quadratic, load_limit_surface, quartic_from_gram, save_limit_surface)
from .multi_contact import LcpProblem, MultiContactOutcome, assemble_lcp, resolve_multi_contact
from .single_contact import ContactMode, resolve_single_contact
from .stochastic import StochasticConfig, sample_mu_c, sample_quadratic, sample_quartic, wishart_sample
from .support_oracle import OracleLimitSurface, SupportModel, generate_pairs, wrench_of_twist_oracle

__version__ = "0.1.0"
