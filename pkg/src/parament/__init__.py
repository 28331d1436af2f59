"""Entanglement of two coupled, continuously measured oscillators under a
parametrically modulated interaction, with Kalman filtering and LQR feedback."""

from .analytics import (
    MathieuModel,
    OutsideWindow,
    analytic_conditional_negativity,
    analytic_excess_noise,
    closed_form_negativity,
    common_mode_approx,
    conditional_cov_approx,
    floquet_monodromy,
    lambda2_closed_form,
    mathieu_exponent,
    mathieu_model,
    mathieu_params,
    mode_amplitudes,
    mode_vectors,
    noise_ellipse,
    relative_phase,
    resonance_window,
    static_negativity,
    static_negativity_pipeline,
)
from .conditional import (
    IntegratorConfig,
    PeriodicSolution,
    PSDViolation,
    common_mode_steady_state,
    find_periodic_steady_state,
    integrate_conditional,
    mean_trajectory,
    riccati_rhs,
    static_conditional_state,
)
from .control import (
    FeedbackGain,
    epr_cost_matrix,
    excess_noise_rhs,
    finite_horizon_gain,
    integrate_excess_noise,
    lqr_cost_eval,
    periodic_excess_noise,
    solve_are_gain,
    unconditional_cov,
)
from .entanglement import (
    InconsistentBlocks,
    NegativityReport,
    log_negativity,
    log_negativity_series,
    period_average,
    symplectic_nu,
)
from .params import (
    CovBlock,
    NormalizedParams,
    ParameterError,
    SystemParams,
    TwoModeState,
    dimensionless,
    drift_matrix,
    eigenfrequencies,
    mode_transform,
    noise_matrices,
)
from .timeseries import TimeSeries

__version__ = "0.1.0"
