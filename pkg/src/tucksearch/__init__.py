"""Tucker-2 convolution compression with a differentiable, cost-aware rank search."""

from .checkpoint import load_checkpoint, save_checkpoint
from .costmodel import (
    LatencyTable,
    count_flops,
    expected_layer_cost,
    flops_proxy_table,
    load_latency_table,
    lookup,
    penalty_factor,
    save_latency_table,
    synthetic_plateau_table,
)
from .data import (
    hash_split,
    iter_batches,
    load_csv_dataset,
    load_idx_dataset,
    synthetic_dataset,
)
from .errors import CostResolutionError, DataFormatError, NumericError
from .layers import Conv2d, Flatten, Linear, MaxPool2d, ReLU, TuckerConv2d
from .modelio import decompose_net, load_model, load_ranks_csv, save_model, save_ranks_csv
from .net import SequentialNet, build_dense_net, composite_loss, cross_entropy, evaluate
from .netspec import LayerRecord, conv_specs, load_netspec, save_netspec, simple_cnn
from .optim import LrSchedule, SgdNesterov
from .rankspace import (
    CompressionTarget,
    LayerRankPlan,
    RankSpacePlan,
    alpha_rank,
    build_rank_space,
    step_size_for,
)
from .search import (
    SearchConfig,
    SelectionResult,
    Supernet,
    build_supernet,
    fine_tune,
    finalize,
    run_search,
    selected_net,
)
from .tensor_ops import SvdResult, fold, mode_product, truncated_svd, unfold
from .tucker import (
    ConvLayerSpec,
    RankPair,
    SpectralInfo,
    TuckerFactors,
    count_params,
    decompose,
    equal_spectrum_rho,
    preservation_ratio,
    reconstruct,
)

__version__ = "0.1.0"
