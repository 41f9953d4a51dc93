"""cgpnet: directed-graph and filter-coefficient estimation for causal
graph process time series, with a simulator, baselines, and benchmarks."""

from .model import (
    AdjacencyMatrix,
    CGPModel,
    CoefficientVector,
    FilterStack,
    SimulationDivergence,
    StabilityReport,
    TimeSeriesMatrix,
    cgp_predictor,
    commutator,
    eval_poly_filters,
    predict_one_step,
    simulate_cgp,
    spectral_radius,
    stability_check,
)
from .datagen import (
    DATASET_PRESETS,
    CgpDataset,
    GraphGenSpec,
    generate_dataset,
    random_sparse_adjacency,
    stable_coefficients,
)
from .solver import (
    BcdResult,
    EstimationResult,
    Penalty,
    SolverConfig,
    basic_algorithm,
    block_coordinate_descent,
    cgp_data_loss,
    default_penalty_scale,
    estimate_c_from_data,
    estimate_c_from_r,
    extended_algorithm,
    extended_refinement,
    grad_block,
    group_soft_threshold,
    joint_objective,
    prox_l1,
    proximal_gradient,
    recover_a_commutator,
    recover_a_take_r1,
    update_block,
)
from .baselines import (
    DistanceGraph,
    SvarResult,
    distance_adjacency,
    distance_predictor,
    fit_distance_graph,
    svar_group_lasso,
    svar_predictor,
)
from .evaluation import (
    BenchmarkSpec,
    MetricsReport,
    entry_mse,
    even_odd_split,
    highpass_detrend,
    linear_detrend,
    prediction_mse,
    run_benchmark,
    sparsity_pnnz,
    support_metrics,
)

__version__ = "0.1.0"
