"""Rolling-ball dynamics on the sphere, its reparametrizations and their checks."""
from .analysis import (
    DriftReport,
    NonConservedWarning,
    chaplygin_chain,
    cross_check_chain,
    drift_report,
    energy_g0,
    gstar_energy,
    natural_energy,
    noether_phi,
    noether_phi_star,
    noether_phi_x,
    normalize_unit_energy,
    quad_integral,
)
from .coords import SpheroConical, gamma_from_u, u_from_x, x_from_u
from .dynamics import Derivative, Flow, make_flow, natural_rhs, reduced_rhs
from .geometry import MetricKind, TangencyError, gamma_to_x, inner, x_to_gamma
from .integrate import (
    ConstraintViolationError,
    IntegrationError,
    MultiplierSignError,
    ReparamMap,
    StepSizeError,
    Trajectory,
    integrate,
    resample,
    time_map,
)
from .types import (
    AffinePower,
    BallConfig,
    ConfigError,
    DomainError,
    FlatFieldConfig,
    SphereState,
    epsilon_from_radii,
    make_ball_config,
    make_flat_fields,
    project_state,
)

__version__ = "0.1.0"
