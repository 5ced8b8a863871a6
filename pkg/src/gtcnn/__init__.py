"""Graph-time convolutional neural networks over parametric product graphs."""

__version__ = "0.1.0"

from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GTCNNError,
    InvalidSizeError,
    SamplingError,
    SizeMismatchError,
    UndefinedMetricError,
)
from .sparse import SparseMatrix, degrees, read_edge_list, spectral_radius, spmv, write_edge_list
from .graphs import (
    SpatialGraph,
    TemporalGraph,
    build_geometric_graph,
    build_temporal_graph,
    great_circle_km,
    is_connected,
    load_coordinates_csv,
    sample_sbm,
)
from .product import (
    PRESETS,
    ProductParams,
    build_product_shift,
    devectorize,
    edge_count_formula,
    expand_parametric_to_grid,
    product_edge_count,
    vectorize,
)
from .filters import FactorShifts, GTFilterBank, filter_bank_forward, gt_filter_dense, gt_filter_recursive
from .pooling import PoolingPlan, downsample_zero_pad, select_active_nodes, slice_time, summarize
from .model import GTCNN, LayerConfig, ModelConfig, layer_forward, load_checkpoint, model_forward, read_checkpoint, save_checkpoint
from .training import (
    TrainConfig,
    adam_step,
    backward,
    loss_classification,
    loss_forecast,
    metric_accuracy,
    metric_rnmse,
    multistep_rnmse,
    train,
    write_history_csv,
)
from .datasets import (
    SampleSet,
    gen_diffusion_series,
    gen_source_localization,
    load_dataset,
    load_timeseries_csv,
    save_dataset,
    window_series,
)
