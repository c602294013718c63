"""Truly sparse MLP training with evolutionary prune/regrow, an activation
function suite including the learnable SReLU, and a sweep harness that
evaluates activation x sparsity grids."""

from .activations import ActivationKind, SReLUParams, act_backward, act_forward
from .data import (
    Dataset,
    load_cifar10,
    load_dataset_spec,
    make_synthetic,
    save_cifar10,
    standardize,
    subset,
)
from .evolution import (
    EvolutionConfig,
    epsilon_from_sparsity,
    evolve,
    expected_param_count,
    init_sparse_layer,
)
from .network import (
    Network,
    NetworkConfig,
    build_network,
    forward,
    load_network,
    loss_and_backward,
    save_network,
)
from .sparse import (
    SparseWeights,
    density,
    load_snapshot,
    save_snapshot,
    sparse_backward,
    sparse_forward,
    sparsity,
)
from .sweep import (
    RunResult,
    RunSpec,
    SweepGrid,
    emit_chart_data,
    execute_run,
    overfitting_series,
    run_sweep,
    sparsity_sweep_table,
)
from .trainer import (
    DivergenceError,
    EpochRecord,
    TrainConfig,
    evaluate,
    sgd_momentum_step,
    train,
    train_epoch,
)

__version__ = "0.1.0"
