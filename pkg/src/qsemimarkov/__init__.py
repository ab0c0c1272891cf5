"""Memory-kernel master equations with diagonal loss terms: Volterra solvers,
dynamical maps, complete-positivity certificates and the underlying classical
semi-Markov process."""
from .certify import (
    CPReport,
    ConditionResult,
    GMatrixTrajectory,
    NotInClass,
    certify,
    check_cond1,
    check_cond2,
    compute_G,
    compute_G_tilde,
    compute_T,
    diagonal_violation_times,
)
from .classical import (
    NO_JUMP,
    PopulationEstimate,
    TrajectoryRecord,
    WaitingTimeTable,
    estimate_populations,
    sample_waiting_time,
    simulate_ensemble,
    simulate_trajectory,
    solve_gme,
    waiting_time_table,
)
from .functions import ComplexRate, ScalarFn, TimeGrid, combine
from .kernel import (
    ClassicalAnnotation,
    JumpChannel,
    KernelSpec,
    NegativeRate,
    NonDiagonalLossTerm,
    SpecError,
    dump_spec,
    load_spec,
    validate_spec,
)
from .maps import (
    MapTrajectory,
    apply_map,
    choi_at,
    compute_V,
    compute_V0,
    decoherence_functions,
    dyson_series,
    evolve_state,
    min_choi_eigenvalue,
)
from .volterra import (
    ConvolutionKernel,
    StepSizeError,
    laplace_rational_solve,
    refine_and_estimate,
    solve_linear_system,
    solve_scalar,
)
from .zoo import PRESETS, diagonal_qsm, oscillator, preset, transport, two_level

__version__ = "0.1.0"
