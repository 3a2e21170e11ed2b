"""DeepDTA network: two sequence encoders feeding a fully connected head.

Each encoder is embedding -> three valid 1D convolutions (base, 2*base and
3*base filters, ReLU after each) -> global max pool.  A branch can instead
take a precomputed similarity row.  Variant names give the protein branch
first, then the compound branch: ``CnnSim`` encodes proteins with a CNN and
describes compounds by similarity.
"""

import json
from dataclasses import asdict, dataclass, fields
from enum import Enum

import numpy as np

from .encoding import VOCAB_SIZES, VocabularyKind
from .neural import (
    AdamState,
    LayerKind,
    LayerParams,
    Tensor,
    concat,
    conv1d,
    conv1d_params,
    dense,
    dense_params,
    dropout,
    embedding_conv1d,
    embedding_params,
    gather_rows,
    global_max_pool,
    read_checkpoint,
    relu,
    write_checkpoint,
)
from .neural.checkpoint import CheckpointError
from .neural.tensor import make_result


class Variant(str, Enum):
    CNN_CNN = "CnnCnn"
    CNN_SIM = "CnnSim"   # CNN proteins, similarity compounds
    SIM_CNN = "SimCnn"   # similarity proteins, CNN compounds
    SIM_SIM = "SimSim"

    @property
    def protein_cnn(self):
        return self.value.startswith("Cnn")

    @property
    def compound_cnn(self):
        return self.value.endswith("Cnn")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "CnnCnn"
    num_filters_base: int = 32
    compound_filter_length: int = 4
    protein_filter_length: int = 8
    embed_dim: int = 128
    smiles_max_len: int = 85
    protein_max_len: int = 1200
    fc_sizes: tuple = (1024, 1024, 512)
    dropout_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 0.001
    seed: int = 0
    # similarity-branch input widths (entity counts); unused by CNN branches
    drug_sim_dim: int = 0
    target_sim_dim: int = 0
    # >0 inserts a dense+ReLU of this width on each similarity branch
    sim_projection: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant).value)
        object.__setattr__(self, "fc_sizes", tuple(int(x) for x in self.fc_sizes))
        self.validate()

    @property
    def kind(self):
        return Variant(self.variant)

    def conv_filters(self):
        b = self.num_filters_base
        return (b, 2 * b, 3 * b)

    def validate(self):
        positive = ["num_filters_base", "compound_filter_length", "protein_filter_length",
                    "embed_dim", "smiles_max_len", "protein_max_len", "epochs", "batch_size"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if len(self.fc_sizes) != 3 or min(self.fc_sizes) < 1:
            raise ConfigError(f"fc_sizes must be three positive ints, got {self.fc_sizes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        kind = self.kind
        if kind.compound_cnn:
            _conv_output_length(self.smiles_max_len, self.compound_filter_length, "compound")
        elif self.drug_sim_dim < 1:
            raise ConfigError(f"{kind.value} needs drug_sim_dim >= 1")
        if kind.protein_cnn:
            _conv_output_length(self.protein_max_len, self.protein_filter_length, "protein")
        elif self.target_sim_dim < 1:
            raise ConfigError(f"{kind.value} needs target_sim_dim >= 1")

    def to_dict(self):
        d = asdict(self)
        d["fc_sizes"] = list(self.fc_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ModelConfig.from_dict(d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return ModelConfig.from_dict(json.load(fh))


def _conv_output_length(length, k, branch):
    out = length
    for layer in (1, 2, 3):
        out = out - k + 1
        if out < 1:
            raise ConfigError(
                f"{branch} branch: conv layer {layer} has non-positive output length "
                f"(input {length}, filter length {k})")
    return out


def expected_parameter_shapes(config):
    """Closed-form parameter shapes, keyed by parameter name, in build order."""
    shapes = {}
    kind = config.kind
    filters = config.conv_filters()
    widths = {}
    for branch, is_cnn, vocab, k, sim_dim in (
        ("compound", kind.compound_cnn, VOCAB_SIZES[VocabularyKind.SMILES],
         config.compound_filter_length, config.drug_sim_dim),
        ("protein", kind.protein_cnn, VOCAB_SIZES[VocabularyKind.PROTEIN],
         config.protein_filter_length, config.target_sim_dim),
    ):
        if is_cnn:
            shapes[f"{branch}.embedding.weights"] = (vocab + 1, config.embed_dim)
            c_in = config.embed_dim
            for i, f in enumerate(filters, 1):
                shapes[f"{branch}.conv{i}.weights"] = (f, c_in, k)
                shapes[f"{branch}.conv{i}.bias"] = (f,)
                c_in = f
            widths[branch] = filters[-1]
        elif config.sim_projection:
            shapes[f"{branch}.proj.weights"] = (config.sim_projection, sim_dim)
            shapes[f"{branch}.proj.bias"] = (config.sim_projection,)
            widths[branch] = config.sim_projection
        else:
            widths[branch] = sim_dim
    n_in = widths["compound"] + widths["protein"]
    for i, units in enumerate(config.fc_sizes, 1):
        shapes[f"fc{i}.weights"] = (units, n_in)
        shapes[f"fc{i}.bias"] = (units,)
        n_in = units
    shapes["out.weights"] = (1, n_in)
    shapes["out.bias"] = (1,)
    return shapes


def parameter_count(config):
    return sum(int(np.prod(s)) for s in expected_parameter_shapes(config).values())


class AffinityModel:
    def __init__(self, config, layers, optimizer_state=None):
        self.config = config
        self.layers = layers        # name -> LayerParams, in build order
        self.optimizer_state = optimizer_state or AdamState(learning_rate=config.learning_rate)

    def named_parameters(self):
        out = []
        for lname, layer in self.layers.items():
            out.append((f"{lname}.weights", layer.weights))
            if layer.bias is not None:
                out.append((f"{lname}.bias", layer.bias))
        return out

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad = None

    def shape_audit(self):
        expected = expected_parameter_shapes(self.config)
        actual = {n: tuple(p.shape) for n, p in self.named_parameters()}
        if expected != actual:
            raise ConfigError(f"parameter shapes {actual} differ from expected {expected}")
        return True

    def _cnn_branch(self, branch, indices):
        uniq, inverse = np.unique(indices, axis=0, return_inverse=True)
        table = self.layers[f"{branch}.embedding"].weights
        first = self.layers[f"{branch}.conv1"]
        x = relu(embedding_conv1d(uniq, table, first.weights, first.bias, where=f"{branch} conv1"))
        for i in (2, 3):
            layer = self.layers[f"{branch}.conv{i}"]
            x = relu(conv1d(x, layer.weights, layer.bias, where=f"{branch} conv{i}"))
        x = global_max_pool(x)
        return gather_rows(x, inverse.ravel())

    def _sim_branch(self, branch, rows):
        x = Tensor(rows)
        if self.config.sim_projection:
            layer = self.layers[f"{branch}.proj"]
            x = relu(dense(x, layer.weights, layer.bias))
        return x

    def forward(self, compound_inputs, protein_inputs, training=False, rng=None):
        cfg = self.config
        kind = cfg.kind
        compound_inputs = np.asarray(compound_inputs)
        protein_inputs = np.asarray(protein_inputs)
        if compound_inputs.ndim != 2 or protein_inputs.ndim != 2:
            raise ConfigError("inputs must be 2-D batches")
        if compound_inputs.shape[0] != protein_inputs.shape[0]:
            raise ConfigError(
                f"batch size mismatch: {compound_inputs.shape[0]} compounds, "
                f"{protein_inputs.shape[0]} proteins")
        c_width = cfg.smiles_max_len if kind.compound_cnn else cfg.drug_sim_dim
        p_width = cfg.protein_max_len if kind.protein_cnn else cfg.target_sim_dim
        if compound_inputs.shape[1] != c_width:
            raise ConfigError(f"compound inputs have width {compound_inputs.shape[1]}, model expects {c_width}")
        if protein_inputs.shape[1] != p_width:
            raise ConfigError(f"protein inputs have width {protein_inputs.shape[1]}, model expects {p_width}")
        c = (self._cnn_branch("compound", compound_inputs) if kind.compound_cnn
             else self._sim_branch("compound", compound_inputs))
        p = (self._cnn_branch("protein", protein_inputs) if kind.protein_cnn
             else self._sim_branch("protein", protein_inputs))
        x = concat(c, p)
        for i in (1, 2, 3):
            layer = self.layers[f"fc{i}"]
            x = relu(dense(x, layer.weights, layer.bias))
            if i < 3:
                x = dropout(x, cfg.dropout_rate, training, rng)
        out = self.layers["out"]
        y = dense(x, out.weights, out.bias)
        return _squeeze_last(y)

    def predict(self, compound_inputs, protein_inputs, chunk=512):
        """Eval-mode predictions as a numpy vector."""
        n = len(compound_inputs)
        res = np.empty(n)
        for s in range(0, n, chunk):
            res[s:s + chunk] = self.forward(compound_inputs[s:s + chunk],
                                            protein_inputs[s:s + chunk]).data
        return res


def _squeeze_last(t):
    def backward_fn(g):
        return (g[..., None],)

    return make_result(t.data[..., 0], (t,), backward_fn)


def build_model(config, rng_seed=None):
    """Initialise every layer with seeded Glorot-uniform weights and zero biases."""
    config.validate()
    rng = np.random.default_rng(config.seed if rng_seed is None else rng_seed)
    kind = config.kind
    filters = config.conv_filters()
    layers = {}
    widths = {}
    for branch, is_cnn, vocab, k, sim_dim in (
        ("compound", kind.compound_cnn, VOCAB_SIZES[VocabularyKind.SMILES],
         config.compound_filter_length, config.drug_sim_dim),
        ("protein", kind.protein_cnn, VOCAB_SIZES[VocabularyKind.PROTEIN],
         config.protein_filter_length, config.target_sim_dim),
    ):
        if is_cnn:
            layers[f"{branch}.embedding"] = embedding_params(vocab, config.embed_dim, rng,
                                                            name=f"{branch}.embedding")
            c_in = config.embed_dim
            for i, f in enumerate(filters, 1):
                layers[f"{branch}.conv{i}"] = conv1d_params(c_in, f, k, rng, name=f"{branch}.conv{i}")
                c_in = f
            widths[branch] = filters[-1]
        elif config.sim_projection:
            layers[f"{branch}.proj"] = dense_params(sim_dim, config.sim_projection, rng,
                                                    name=f"{branch}.proj")
            widths[branch] = config.sim_projection
        else:
            widths[branch] = sim_dim
    n_in = widths["compound"] + widths["protein"]
    for i, units in enumerate(config.fc_sizes, 1):
        layers[f"fc{i}"] = dense_params(n_in, units, rng, name=f"fc{i}")
        n_in = units
    layers["out"] = dense_params(n_in, 1, rng, name="out")
    model = AffinityModel(config, layers)
    model.shape_audit()
    return model


def predict_batch(model, compound_inputs, protein_inputs, mode="Eval", rng=None):
    """Predictions as a Tensor of length n; ``mode`` is ``"Train"`` or ``"Eval"``."""
    if mode not in ("Train", "Eval"):
        raise ValueError(f"mode must be 'Train' or 'Eval', got {mode!r}")
    return model.forward(compound_inputs, protein_inputs, training=(mode == "Train"), rng=rng)


def save_model(model, path):
    write_checkpoint(path, model.config.to_dict(),
                     [(n, p.data) for n, p in model.named_parameters()])


def load_model(path):
    raw_config, arrays = read_checkpoint(path)
    try:
        config = ModelConfig.from_dict(raw_config)
    except (ConfigError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid config in header ({exc})") from None
    expected = expected_parameter_shapes(config)
    if list(arrays) != list(expected):
        raise CheckpointError(f"{path}: parameter manifest does not match config")
    layers = {}
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise CheckpointError(f"{path}: {name} has shape {arrays[name].shape}, expected {shape}")
    for full_name in expected:
        lname, _ = full_name.rsplit(".", 1)
        t = Tensor(arrays[full_name], requires_grad=True, name=full_name)
        if lname not in layers:
            layers[lname] = LayerParams(t, None, _layer_kind(lname))
        else:
            layers[lname].bias = t
    return AffinityModel(config, layers)


def _layer_kind(lname):
    if lname.endswith("embedding"):
        return LayerKind.EMBEDDING
    if ".conv" in lname:
        return LayerKind.CONV1D
    return LayerKind.DENSE
