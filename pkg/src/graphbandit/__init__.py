"""Bandit optimization over graph domains with graph neural tangent kernels."""

from .bandit import (
    ConfidenceConfig,
    ConfidenceState,
    PeState,
    PracticalFlags,
    RunRecord,
    beta,
    mu_hat,
    pe_eliminate,
    pe_step,
    regret_metrics,
    run_pe,
    run_ucb,
    sigma_hat,
)
from .gp import (
    GpPosterior,
    Observations,
    RewardTable,
    greedy_mig_curve,
    information_gain,
    load_reward,
    observe,
    posterior,
    sample_reward,
    save_reward,
)
from .graphs import (
    AggregatedGraph,
    Graph,
    GraphDomain,
    Permutation,
    aggregate,
    aggregate_domain,
    gen_erdos_renyi,
    load_domain,
    pad_to,
    permute,
    save_domain,
)
from .kernels import (
    KernelMatrix,
    gntk,
    kappa0,
    kappa1,
    kbar_bruteforce,
    kernel_matrix,
    min_eigenvalue,
    ntk,
    ntk_vanilla,
)
from .network import (
    NetworkParams,
    TrainConfig,
    gnn_forward,
    gnn_forward_raw,
    gnn_gradient,
    init_params,
    load_params,
    nn_forward,
    save_params,
    tangent_kernel_finite,
    train_gnn,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
