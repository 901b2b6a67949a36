"""spanrel: relation classification as bidirectional span prediction.

Reduces RC corpora to SQuAD 2.0 span-prediction datasets (two questions per
compatible relation, forward and reverse), runs pluggable extractive QA
predictors, and decodes span predictions back into relation labels with
per-template thresholds and OR/AND answer combination.
"""

from .decoding import (
    DecodingConfig,
    ProvenanceIndex,
    RelationVerdict,
    ThresholdTable,
    calibrate_thresholds,
    decode_binary,
    decode_dataset,
    decode_multiclass,
    question_hit,
    spans_compatible,
)
from .errors import (
    CalibrationError,
    DatasetError,
    DecodingError,
    PredictionError,
    ProtocolError,
    SchemaError,
    SpanrelError,
)
from .evaluation import CreMetrics, RcMetrics, ablation_report, evaluate_cre, evaluate_rc
from .predictors import (
    PredictionSet,
    SpanPrediction,
    lexical_predict,
    oracle_predict,
    parse_predictions,
    remote_predict,
)
from .reduction import (
    CharSpan,
    RcInstance,
    SpDataset,
    SpInstance,
    TokenSpan,
    mix_unified,
    parse_rc_dataset,
    parse_squad,
    reduce_dataset,
    reduce_instance,
    render_context,
    serialize_squad,
)
from .schema import (
    RelationDef,
    RelationSchema,
    Template,
    TemplatePair,
    compatible_relations,
    derive_compatibility,
    instantiate,
    load_schema,
    parse_schema_dict,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "CharSpan",
    "CreMetrics",
    "DatasetError",
    "DecodingConfig",
    "DecodingError",
    "PredictionError",
    "PredictionSet",
    "ProtocolError",
    "ProvenanceIndex",
    "RcInstance",
    "RcMetrics",
    "RelationDef",
    "RelationSchema",
    "RelationVerdict",
    "SchemaError",
    "SpDataset",
    "SpInstance",
    "SpanPrediction",
    "SpanrelError",
    "Template",
    "TemplatePair",
    "ThresholdTable",
    "TokenSpan",
    "ablation_report",
    "calibrate_thresholds",
    "compatible_relations",
    "decode_binary",
    "decode_dataset",
    "decode_multiclass",
    "derive_compatibility",
    "evaluate_cre",
    "evaluate_rc",
    "instantiate",
    "lexical_predict",
    "load_schema",
    "mix_unified",
    "oracle_predict",
    "parse_predictions",
    "parse_rc_dataset",
    "parse_schema_dict",
    "parse_squad",
    "question_hit",
    "reduce_dataset",
    "reduce_instance",
    "remote_predict",
    "render_context",
    "serialize_squad",
    "spans_compatible",
]
