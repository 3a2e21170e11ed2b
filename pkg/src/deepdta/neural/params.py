"""Layer parameter containers and Glorot-uniform initialisation."""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .tensor import Tensor


class LayerKind(str, Enum):
    EMBEDDING = "Embedding"
    CONV1D = "Conv1D"
    DENSE = "Dense"


@dataclass
class LayerParams:
    weights: Tensor
    bias: Optional[Tensor]
    layer_kind: LayerKind

    def tensors(self):
        return [t for t in (self.weights, self.bias) if t is not None]


def glorot_uniform(shape, fan_in, fan_out, rng):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def embedding_params(vocab_size, embed_dim, rng, name="embedding"):
    """Table with ``vocab_size + 1`` rows; row 0 is the (learned) padding row."""
    shape = (vocab_size + 1, embed_dim)
    w = glorot_uniform(shape, shape[0], shape[1], rng)
    return LayerParams(Tensor(w, requires_grad=True, name=f"{name}.weights"), None,
                       LayerKind.EMBEDDING)


def conv1d_params(in_channels, num_filters, filter_length, rng, name="conv"):
    shape = (num_filters, in_channels, filter_length)
    w = glorot_uniform(shape, in_channels * filter_length, num_filters * filter_length, rng)
    return LayerParams(
        Tensor(w, requires_grad=True, name=f"{name}.weights"),
        Tensor(np.zeros(num_filters), requires_grad=True, name=f"{name}.bias"),
        LayerKind.CONV1D,
    )


def dense_params(in_units, out_units, rng, name="dense"):
    w = glorot_uniform((out_units, in_units), in_units, out_units, rng)
    return LayerParams(
        Tensor(w, requires_grad=True, name=f"{name}.weights"),
        Tensor(np.zeros(out_units), requires_grad=True, name=f"{name}.bias"),
        LayerKind.DENSE,
    )
