"""curvlasso: elastic-net regression with one-shot randomized curvature.

The library factors the data matrix once with a randomized block Lanczos
sketch, turns the factors into a structured approximate Hessian of the ridge
loss with O(rd) apply/solve, and minimizes the composite objective with an
inexact accelerated scaled proximal SVRG. First-order baselines and a
benchmark harness live alongside.
"""

from .baselines import BaselineConfig, fista, katyusha1, pgd, prox_svrg
from .bench import (
    ExperimentConfig,
    TuneGrid,
    emit_spectrum,
    optimality_certificate,
    reference_optimum,
    run_experiment,
    run_method,
    spectral_ratio,
    theory_step,
    tune_step,
)
from .datasets import (
    Problem,
    SyntheticSpec,
    column_scale,
    fetch_dataset,
    generate_synthetic,
    load_dataset,
    load_libsvm,
    parse_libsvm,
    serialize_libsvm,
)
from .hessian import (
    ConditionReport,
    HessianModel,
    SmoothnessProfile,
    apply_h,
    apply_h_inv,
    build_hessian,
    condition_report,
    effective_dimension,
    h_inv_norm,
    h_norm,
    lemma1_spectral_check,
    smoothness_profile,
)
from .linalg import SparseMatrix, dense_svd, matvec, matvec_t, spectral_norm, thin_qr
from .prox import (
    SubproblemBudget,
    SubproblemSpec,
    oracle_scaled_prox,
    soft_threshold,
    solve_scaled_prox,
    subproblem_budget,
    warm_start,
)
from .sketch import (
    LowRankFactors,
    SketchConfig,
    block_lanczos,
    load_factors,
    per_vector_error_stat,
    save_factors,
)
from .solver import (
    DivergenceError,
    SolverConfig,
    SolverState,
    SolverTrace,
    full_gradient,
    inner_step,
    lyapunov_value,
    minibatch_gradient,
    objective,
    run,
    split_rng,
)

__version__ = "0.1.0"
