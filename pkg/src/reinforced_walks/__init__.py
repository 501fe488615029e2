"""Mean-field interacting reinforced random walks on [0, 1].

Simulation (compiled kernels with a numpy fallback), exact small-case
oracles, and statistical checks of convergence, synchronization and
fluctuation limits.
"""
from __future__ import annotations

from ._backend import BACKEND
from .analytics import (
    TestReport,
    VtSpec,
    convergence_to_q_test,
    covariance_structure_test,
    fixation_detector,
    mixed_gaussian_test,
    polarization_test,
    rate_regression,
    scaled_fluct_process,
    scaled_sync_process,
    v_t,
)
from .applications import PAGraph, UrnSpec, graph_to_schedule, pa_grow, pa_trajectory, urn_to_schedule
from .ensemble import EnsembleResult, ExplicitSteps, Geometric, TimeWindow, moment_stream, run_ensemble
from .errors import (
    BudgetExceeded,
    GridMismatch,
    InadmissibleRegime,
    Inconclusive,
    InvalidKernel,
    InvalidParameters,
    InvalidUrn,
    NotRepresentable,
    ReinforcedWalksError,
    ScheduleExhausted,
)
from .model import (
    Deterministic,
    KernelSpec,
    ModelParams,
    SymmetricBeta,
    TwoPoint,
    WalkState,
    conditional_mean_increments,
    conditional_variances,
    draw_probabilities,
    kernel_decompose,
    step,
)
from .oracle import (
    enumerate_distribution,
    exact_moments,
    lemma_a1_iterate,
    variance_bounds_interacting,
    variance_recursion_alpha0,
)
from .rng import RandomStream
from .schedules import Explicit, GraphDerived, PowerLaw, StepSchedule, UrnDerived, step_size

__version__ = "0.1.0"
