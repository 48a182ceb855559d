"""Decentralized Gaussian-process data fusion and entropy-driven active
sensing for mobile sensors on road networks."""

from .active_sensing import (
    BoundCondition,
    BoundReport,
    JointWalk,
    Walk,
    adjacency_vector,
    blockwise_joint_entropy,
    bound_report,
    centralized_joint_walk,
    compute_phi,
    compute_xi,
    connected_components,
    coordination_adjacency,
    enumerate_walks,
    induced_unobserved,
    max_entropy_joint_walk,
    support_cholesky,
    theorem2_bound,
    walk_entropy,
)
from .errors import (
    ConfigError,
    NetworkError,
    PositiveDefiniteError,
    ProtocolError,
    SearchBudgetError,
)
from .fusion import (
    GlobalSummary,
    LocalSummary,
    SupportSet,
    decode_local_summary,
    encode_local_summary,
    fused_posterior,
    global_summary,
    local_summary,
    pitc_posterior,
    summary_message_size,
)
from .gp_core import (
    GaussianBelief,
    ObservationSet,
    gp_posterior,
    greedy_select,
    joint_entropy,
    sample_gp,
    sod_posterior,
)
from .road_kernel import (
    EmbeddedKernel,
    Embedding,
    FitConfig,
    GeodesicMatrix,
    KernelHyperparams,
    RoadNetwork,
    build_road_network,
    choose_embedding_dim,
    edge_weight,
    fit_hyperparameters,
    geodesic_distances,
    load_network,
    log_marginal_likelihood,
    make_kernel,
    mds_embed,
    save_network,
)
from .sim_harness import (
    ExperimentConfig,
    MetricsRow,
    SensorState,
    SimConfig,
    WorldState,
    init_world,
    random_network,
    rmse,
    run_experiment,
    step_round,
)

__version__ = "0.1.0"
