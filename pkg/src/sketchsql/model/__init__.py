from sketchsql.model.config import Resolver, TrainConfig
from sketchsql.model.decoding import Prediction, decode, decode_candidates
from sketchsql.model.network import Encoding, HeadOutputs, encode, predict_heads, predict_value_span
from sketchsql.model.params import (
    MAX_COND,
    MAX_SELECT,
    Model,
    ParamRegistry,
    load_checkpoint,
    new_model,
    save_checkpoint,
)
from sketchsql.model.training import subtask_accuracy, train

__all__ = [
    "Resolver",
    "TrainConfig",
    "Prediction",
    "decode",
    "decode_candidates",
    "Encoding",
    "HeadOutputs",
    "encode",
    "predict_heads",
    "predict_value_span",
    "MAX_COND",
    "MAX_SELECT",
    "Model",
    "ParamRegistry",
    "load_checkpoint",
    "new_model",
    "save_checkpoint",
    "subtask_accuracy",
    "train",
]
