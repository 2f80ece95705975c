"""Numerical multichannel smooth scattering on Hermitian matrices.

The package assembles a two-space comparison triple (stacked channel
operator, full operator, block row-sum identification) for a family of
Hermitian channels, solves the associated sandwiched Fredholm resolvent
equations, extrapolates boundary values onto the real axis, and builds
wave operators and scattering matrices by both time-limit and stationary
routes, including the Schroedinger-type stacked system without a
remainder slot.
"""

from .errors import (
    BadDimensions,
    BadGrid,
    BoundaryEigenvalue,
    DimensionMismatch,
    ExceptionalEnergy,
    IllConditionedX,
    IntervalContainsZero,
    McscatError,
    MultiplicityError,
    NearSingularFredholm,
    NoConvergence,
    NonHermitian,
    OutsideInterval,
    Singular,
    TooFewBins,
    Unconverged,
    ZeroEnergy,
)
from .linalg import herm_eig, op_norm, propagator, solve, spectral_projection
from .model import (
    AssumptionReport,
    ChannelSet,
    MultichannelSystem,
    audit,
    build_system,
    channelset_from_json,
    channelset_to_json,
    make_multiplication_channels,
    make_random_channels,
    plant_embedded_eigenvalue,
    with_rank_one,
)
from .resolvent import (
    BoundaryValue,
    ExceptionalScan,
    ResolventPoint,
    boundary_value,
    boundary_value_window,
    check_dissipation_identity,
    exceptional_scan,
    geometric_schedule,
    local_spacing,
    resolvent_via_fredholm,
    sandwiched_resolvent,
)
from .scattering import (
    ScatteringSample,
    WaveOperatorResult,
    assemble_f_pm,
    channel_orthogonality,
    completeness_check,
    default_eps_schedule,
    default_window_schedule,
    gamma_pm,
    scattering_matrix_stationary,
    scattering_matrix_time,
    wave_op_time,
)
from .spectral import (
    FiberOperator,
    SpectralDecomposition,
    channel_profile_vector,
    diagonalize_a0,
    f0_coefficients,
    gamma0_of_lambda,
    smoothness_estimate,
    weyl_compare,
    z0_of_lambda,
)
from .faddeev import (
    FaddeevSystem,
    build_faddeev,
    compactness_surrogate,
    make_lattice_model,
    resolvent_faddeev,
)

__version__ = "0.1.0"
