"""Cross-resolution person re-identification with resolution-based feature
distillation: degradation-based dataset synthesis, a channel-attention
backbone trained once on identities and once on resolution classes, distance
matrix fusion, and CMC evaluation over single- and multi-resolution
galleries."""

from .backbone import (
    BackboneConfig,
    BranchOutputs,
    ChannelAttention,
    ReidBackbone,
    build_model,
    channel_gate,
    embed_images,
    global_average_pool,
    load_checkpoint,
    save_checkpoint,
)
from .data import (
    BinningRule,
    DatasetManifest,
    ImageRecord,
    Split,
    build_mlr,
    degrade_all,
    degrade_mixed,
    fit_resolution_bins,
    load_corpus_csv,
    load_corpus_dir,
    make_splits,
    make_toy_corpus,
    pseudo_label_resolutions,
)
from .evaluation import (
    CMCResult,
    EvalProtocol,
    average_cmc,
    build_protocol,
    cmc,
    evaluate_run,
    extract_embeddings,
    score_protocol,
)
from .losses import PKSampler, batch_hard_triplet, id_loss, sample_pk
from .matching import (
    DistanceMatrix,
    FusionConfig,
    cosine_similarity_matrix,
    feature_distance_matrix,
    fuse,
    resolution_similarity,
)
from .resample import degrade, resize
from .store import StoreMetadata, read_store, write_store
from .trainer import TrainConfig, TrainReport, train_bf, train_br

__version__ = "0.1.0"
