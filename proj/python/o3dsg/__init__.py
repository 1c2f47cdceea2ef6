"""Open-vocabulary 3D scene graphs at desk scale (C++ core)."""

from ._core import (  # noqa: F401
    ConfigError,
    DataError,
    DecoderError,
    EmbeddingTable,
    Error,
    ParseError,
    PipelineConfig,
    RecallItem,
    ScoredLabel,
    TripletItem,
    cosine,
    evaluate,
    extract,
    generate_fixture,
    infer,
    load_config,
    mean_recall_at_k,
    per_class_recall,
    rank_by_cosine,
    read_table,
    recall_at_k,
    select_frames,
    train,
    triplet_recall_at_k,
)
