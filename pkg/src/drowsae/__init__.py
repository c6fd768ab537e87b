"""Anomaly detection for driver monitoring video with an LSTM autoencoder.

Per-frame feature vectors are L2-normalized, windowed into fixed-length
clips, and reconstructed in reverse order by a two-layer LSTM autoencoder
trained only on normal clips. The summed squared reconstruction error,
averaged per value, is the anomaly score; evaluation sweeps clip labeling
rates and reports ROC/AUC plus thresholded confusion metrics.
"""

from .autoencoder import (
    AutoencoderParams,
    LstmLayerParams,
    TrainConfig,
    TrainResult,
    anomaly_score,
    clip_loss,
    decode,
    encode,
    init_params,
    load_checkpoint,
    loss_and_gradients,
    reconstruct,
    save_checkpoint,
    tensor_items,
    train,
)
from .clahe import ClaheConfig, clahe_enhance, clip_histogram, global_hist_equalize
from .dataset import (
    Clip,
    Label,
    ManifestEntry,
    RateConfig,
    Splits,
    WindowSpec,
    assign_clip_label,
    build_splits,
    extract_clips,
    filter_normal_clips,
    parse_rate,
    read_manifest,
    read_split_file,
    window_video,
    write_manifest,
    write_split_file,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    DivergenceError,
    DrowsaeError,
    GridTooFineError,
    InsufficientSubjectsError,
    LabelLengthMismatchError,
    NoNormalClipsError,
    ParseError,
    ShapeMismatchError,
    SingleClassError,
    StageError,
    ZeroVectorError,
)
from .evaluation import (
    ConfusionMetrics,
    EvalReport,
    GridReport,
    ScoredClip,
    auc,
    confusion_metrics,
    evaluate_scored,
    rate_grid_report,
    render_grid_text,
    roc_curve,
    score_histogram,
    select_threshold,
    write_grid_csv,
    write_histogram_file,
)
from .features import (
    Featurizer,
    PatchStatsFeaturizer,
    VideoFeatures,
    featurize_sequence,
    l2_normalize,
    load_feature_file,
    patch_stats_featurize,
    write_feature_file,
)
from .pipeline import (
    ExperimentConfig,
    PipelineResult,
    compare_table,
    load_config,
    read_scores_file,
    run_pipeline,
    stage_seed,
    write_scores_file,
)
from .synthetic import SyntheticSpec, generate_synthetic, make_smooth_sequences

__version__ = "0.1.0"

__all__ = [
    "AutoencoderParams",
    "ClaheConfig",
    "Clip",
    "ConfigError",
    "ConfusionMetrics",
    "DimensionMismatchError",
    "DivergenceError",
    "DrowsaeError",
    "EvalReport",
    "ExperimentConfig",
    "Featurizer",
    "GridReport",
    "GridTooFineError",
    "InsufficientSubjectsError",
    "Label",
    "LabelLengthMismatchError",
    "LstmLayerParams",
    "ManifestEntry",
    "NoNormalClipsError",
    "ParseError",
    "PatchStatsFeaturizer",
    "PipelineResult",
    "RateConfig",
    "ScoredClip",
    "ShapeMismatchError",
    "SingleClassError",
    "Splits",
    "StageError",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "VideoFeatures",
    "WindowSpec",
    "ZeroVectorError",
    "anomaly_score",
    "assign_clip_label",
    "auc",
    "build_splits",
    "clahe_enhance",
    "clip_histogram",
    "clip_loss",
    "compare_table",
    "confusion_metrics",
    "decode",
    "encode",
    "evaluate_scored",
    "extract_clips",
    "featurize_sequence",
    "filter_normal_clips",
    "generate_synthetic",
    "global_hist_equalize",
    "init_params",
    "l2_normalize",
    "load_checkpoint",
    "load_config",
    "load_feature_file",
    "loss_and_gradients",
    "make_smooth_sequences",
    "parse_rate",
    "patch_stats_featurize",
    "rate_grid_report",
    "read_manifest",
    "read_scores_file",
    "read_split_file",
    "reconstruct",
    "render_grid_text",
    "roc_curve",
    "run_pipeline",
    "save_checkpoint",
    "score_histogram",
    "select_threshold",
    "stage_seed",
    "tensor_items",
    "train",
    "window_video",
    "write_feature_file",
    "write_grid_csv",
    "write_scores_file",
    "write_histogram_file",
    "write_manifest",
    "write_split_file",
]
