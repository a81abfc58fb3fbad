from .blocks import (
    StateError,
    batch_norm,
    bilstm,
    embed_patches,
    encode,
    encoder_block,
    extract_patches,
    hybrid_sequencer,
    layer_norm,
    prediction_head,
    self_attention,
)
from .config import (
    ConfigError,
    EncoderConfig,
    ModelSpec,
    PatchConfig,
    SequencerConfig,
    preset,
    toy,
    vitb32,
)
from .network import Model, forward, predicted_labels
from .params import (
    SchemaError,
    buffer_schema,
    count_params,
    init_buffers,
    init_params,
    param_schema,
)

__all__ = [
    "batch_norm",
    "bilstm",
    "buffer_schema",
    "ConfigError",
    "count_params",
    "embed_patches",
    "encode",
    "encoder_block",
    "EncoderConfig",
    "extract_patches",
    "forward",
    "hybrid_sequencer",
    "init_buffers",
    "init_params",
    "layer_norm",
    "Model",
    "ModelSpec",
    "param_schema",
    "PatchConfig",
    "predicted_labels",
    "prediction_head",
    "preset",
    "SchemaError",
    "self_attention",
    "SequencerConfig",
    "StateError",
    "toy",
    "vitb32",
]
