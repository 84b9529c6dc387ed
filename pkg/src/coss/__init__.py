"""Covariate ordered systematic sampling (COSS) for two-arm experiments."""

from coss.allocation import (
    AllocationPlan,
    AllocationStrategy,
    Arm,
    ExperimentUnit,
    allocate,
    coss_allocate,
    rct_allocate,
)
from coss.estimation import (
    CupedAdjustment,
    EffectEstimate,
    Method,
    RegressionFit,
    cuped_estimate,
    diff_means,
    fit_cuped,
    regression_adjust,
)
from coss.harness import ReplicationSummary, Strategy, emit_histogram, run_aa_test, run_study
from coss.inference import (
    InferenceResult,
    TestFamily,
    bootstrap_p,
    bootstrap_variance,
    t_test_independent,
    t_test_paired,
)
from coss.simgen import SimulationConfig, draw_sample, generate_population
from coss.theory import BiasRateSpec, DgpModel, bias_bound_mc, bias_rate, empirical_bias, variance_decomposition

__version__ = "0.1.0"
