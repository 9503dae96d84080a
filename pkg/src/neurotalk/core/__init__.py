from . import nn, tensor
from .params import (
    ParameterStore,
    adam_step,
    clip_grad_norm,
    load_checkpoint,
    make_rng,
    read_arrays,
    save_checkpoint,
    sgd_step,
    write_arrays,
)
from .tensor import DimensionError, NumericError, Tape, TapeStateError, Tensor, backward

__all__ = [
    "DimensionError",
    "NumericError",
    "ParameterStore",
    "Tape",
    "TapeStateError",
    "Tensor",
    "adam_step",
    "backward",
    "clip_grad_norm",
    "load_checkpoint",
    "make_rng",
    "nn",
    "read_arrays",
    "save_checkpoint",
    "sgd_step",
    "tensor",
    "write_arrays",
]
