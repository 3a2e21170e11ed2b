"""Minimal reverse-mode tensor engine with the layers the affinity model needs."""

from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .ops import (
                  concat,
                  conv1d,
                  dense,
                  dropout,
                  embedding,
                  embedding_conv1d,
                  gather_rows,
                  global_max_pool,
                  mse_loss,
                  relu,
                  tensor_sum,
)
from .optim import AdamState, adam_step
from .params import (
                  LayerKind,
                  LayerParams,
                  conv1d_params,
                  dense_params,
                  embedding_params,
                  glorot_uniform,
)
from .tensor import Tensor, backward

__all__ = [
    "AdamState", "CheckpointError", "LayerKind", "LayerParams", "Tensor",
    "adam_step", "backward", "concat", "conv1d", "conv1d_params", "dense",
    "dense_params", "dropout", "embedding", "embedding_conv1d", "embedding_params", "gather_rows",
    "global_max_pool", "glorot_uniform", "mse_loss", "read_checkpoint", "relu",
    "tensor_sum", "write_checkpoint",
]
