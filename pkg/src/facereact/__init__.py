"""Appropriateness labelling and objective evaluation for listener facial reactions.

The package turns a corpus of dyadic behaviour clips into per-clip sets of
appropriate real reactions (via elastic time-series similarity) and scores any
generated reaction set with eight objective metrics covering appropriateness,
diversity, realism, and synchrony.
"""

from .corpus import (
    AFFECT_CHANNELS,
    AU_CHANNELS,
    EXPRESSION_CHANNELS,
    FACIAL_CHANNELS,
    ChannelSchema,
    ClipSeries,
    Corpus,
    CorpusManifest,
    NormalizationParams,
    apply_normalization,
    auto_downsample_factor,
    downsample,
    fit_normalization,
    load_clip_series,
    load_corpus,
    load_manifest,
    write_clip_series,
)
from .dtw import DtwConfig, DtwResult, dtw_banded, dtw_full, lb_keogh, sim
from .errors import ProvenanceError, ValidationError
from .generators import (
    SynthConfig,
    baseline_gt_jitter,
    baseline_mirror,
    baseline_random,
    baseline_retrieval,
    delayed_copy,
    synth_corpus,
)
from .labelling import (
    AppropriatenessIndex,
    LabelConfig,
    SimilarityMatrix,
    build_index,
    load_index,
    load_matrix,
    pairwise_matrix,
    rethreshold_index,
    save_index,
    save_matrix,
)
from .metrics import (
    METRIC_NAMES,
    EvalConfig,
    GeneratedSet,
    MetricReport,
    acc,
    evaluate_all,
    fr_corr,
    fr_dist,
    fr_div,
    fr_dvs,
    fr_rea,
    fr_syn,
    fr_var,
    load_generated_set,
)
from .stats import (
    GaussianModel,
    LagResult,
    ccc,
    ccc_multichannel,
    frechet_distance,
    gaussian_fit,
    mse,
    psd_sqrt,
    series_variance,
    tlcc,
)

__version__ = "0.1.0"
