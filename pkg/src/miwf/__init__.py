"""Numerical lab for the Möbius-invariant Willmore flow of umbilic-free tori."""

from .errors import (
    AmbientMismatch,
    DegenerateMetric,
    InversionCenterOnSurface,
    IrregularCurve,
    MIWFError,
    NonFinite,
    NumericalHalt,
    ParseError,
    PoleOnSurface,
    ScheduleMismatch,
    UmbilicDegeneracy,
    ValidationError,
)
from .flow import (
    FlowConfig,
    FlowState,
    Trajectory,
    deturck_velocity,
    miwf_velocity,
    rk4_step,
    run_flow,
    stability_dt,
    symbol_bounds,
    tan_term,
)
from .geometry import (
    BackgroundConnection,
    GeometryCache,
    ImmersionGrid,
    covariant_derivatives,
    curvature_pack,
    geometry_of,
    metric_pack,
    normal_laplacian,
    q_operator,
    willmore_energy,
    willmore_gradient,
)
from .surfaces import build_clifford_stereo, build_clifford_torus, build_torus_of_revolution

__version__ = "0.1.0"
