import json
import struct

import numpy as np
import pytest
from conftest import rel_err

from deepdta.model import (
    ConfigError,
    ModelConfig,
    Variant,
    build_model,
    expected_parameter_shapes,
    load_config,
    load_model,
    parameter_count,
    predict_batch,
    save_model,
)
from deepdta.neural import backward, mse_loss
from deepdta.neural.checkpoint import MAGIC, CheckpointError

TINY = dict(num_filters_base=2, compound_filter_length=3, protein_filter_length=4,
            embed_dim=4, smiles_max_len=12, protein_max_len=20, fc_sizes=(8, 8, 4))


def tiny_config(**kw):
    return ModelConfig(**{**TINY, **kw})


def random_inputs(rng, cfg, n):
    c = rng.integers(0, 65, (n, cfg.smiles_max_len))
    p = rng.integers(0, 26, (n, cfg.protein_max_len))
    return c, p


def test_davis_default_shapes():
    shapes = expected_parameter_shapes(ModelConfig())
    assert shapes["compound.conv3.weights"] == (96, 64, 4)
    assert shapes["protein.conv3.weights"] == (96, 64, 8)
    assert shapes["fc1.weights"] == (1024, 192)
    assert shapes["compound.embedding.weights"] == (65, 128)
    assert shapes["protein.embedding.weights"] == (26, 128)
    assert shapes["out.weights"] == (1, 512)


def test_simsim_input_width():
    cfg = ModelConfig(variant="SimSim", drug_sim_dim=68, target_sim_dim=442)
    assert expected_parameter_shapes(cfg)["fc1.weights"] == (1024, 510)


def _independent_count(cfg):
    b = cfg.num_filters_base
    total = 0
    for is_cnn, vocab, k, dim in ((cfg.kind.compound_cnn, 64, cfg.compound_filter_length,
                                   cfg.drug_sim_dim),
                                  (cfg.kind.protein_cnn, 25, cfg.protein_filter_length,
                                   cfg.target_sim_dim)):
        if is_cnn:
            e = cfg.embed_dim
            total += (vocab + 1) * e + (b * e * k + b) + (2 * b * b * k + 2 * b) \
                + (3 * b * 2 * b * k + 3 * b)
    width = sum(3 * b if c else d for c, d in ((cfg.kind.compound_cnn, cfg.drug_sim_dim),
                                                (cfg.kind.protein_cnn, cfg.target_sim_dim)))
    f1, f2, f3 = cfg.fc_sizes
    return total + (width + 1) * f1 + (f1 + 1) * f2 + (f2 + 1) * f3 + f3 + 1


@pytest.mark.parametrize("cfg", [
    ModelConfig(),
    ModelConfig(num_filters_base=16, compound_filter_length=6, protein_filter_length=12),
    ModelConfig(variant="SimSim", drug_sim_dim=68, target_sim_dim=442),
    ModelConfig(variant="CnnSim", drug_sim_dim=68),
    ModelConfig(variant="SimCnn", target_sim_dim=442, fc_sizes=(64, 32, 16)),
])
def test_parameter_count_formula(cfg):
    assert parameter_count(cfg) == _independent_count(cfg)


def test_built_model_passes_shape_audit():
    model = build_model(tiny_config(), 0)
    assert model.shape_audit()
    actual = {n: p.shape for n, p in model.named_parameters()}
    assert actual == expected_parameter_shapes(model.config)


def test_variant_branch_order():
    assert Variant("CnnSim").protein_cnn and not Variant("CnnSim").compound_cnn
    assert Variant("SimCnn").compound_cnn and not Variant("SimCnn").protein_cnn


def test_conv_length_error_names_branch():
    with pytest.raises(ConfigError, match="protein branch"):
        tiny_config(protein_max_len=8)


def test_config_validation():
    with pytest.raises(ConfigError):
        tiny_config(dropout_rate=1.0)
    with pytest.raises(ConfigError):
        tiny_config(fc_sizes=(8, 8))
    with pytest.raises(ConfigError, match="drug_sim_dim"):
        ModelConfig(variant="SimSim", target_sim_dim=3)
    with pytest.raises(ValueError):
        ModelConfig(variant="LstmCnn")


def test_config_json_round_trip(tmp_path):
    cfg = tiny_config(seed=11)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    assert load_config(path) == cfg
    assert set(json.loads(cfg.to_json())) >= {
        "variant", "num_filters_base", "compound_filter_length", "protein_filter_length",
        "embed_dim", "smiles_max_len", "protein_max_len", "fc_sizes", "dropout_rate",
        "epochs", "batch_size", "learning_rate", "seed"}


def test_config_unknown_field():
    with pytest.raises(ConfigError, match="filtre"):
        ModelConfig.from_dict({"num_filtres_base": 3})


def test_initialisation_is_seeded():
    a = build_model(tiny_config(), 5)
    b = build_model(tiny_config(), 5)
    c = build_model(tiny_config(), 6)
    for (_, pa), (_, pb), (_, pc) in zip(a.named_parameters(), b.named_parameters(),
                                         c.named_parameters()):
        assert np.array_equal(pa.data, pb.data)
    assert not np.array_equal(a.named_parameters()[0][1].data, c.named_parameters()[0][1].data)


def test_glorot_limits():
    model = build_model(ModelConfig(), 0)
    w = model.layers["protein.conv2"].weights.data
    assert np.abs(w).max() <= np.sqrt(6.0 / (32 * 8 + 64 * 8))
    assert not model.layers["fc1"].bias.data.any()


def test_zero_model_predicts_output_bias(rng):
    model = build_model(tiny_config(), 0)
    for _, p in model.named_parameters():
        p.data[...] = 0.0
    model.layers["out"].bias.data[...] = 4.25
    c, p = random_inputs(rng, model.config, 7)
    assert np.array_equal(model.predict(c, p), np.full(7, 4.25))


def test_eval_is_deterministic(rng):
    model = build_model(tiny_config(), 0)
    c, p = random_inputs(rng, model.config, 9)
    a = predict_batch(model, c, p, "Eval").data
    assert np.array_equal(a, predict_batch(model, c, p, "Eval").data)


def test_eval_ignores_dropout_rate(rng):
    model = build_model(tiny_config(dropout_rate=0.0), 0)
    other = build_model(tiny_config(dropout_rate=0.5), 0)
    c, p = random_inputs(rng, model.config, 6)
    assert np.array_equal(model.predict(c, p), other.predict(c, p))


def test_train_mode_needs_rng(rng):
    model = build_model(tiny_config(), 0)
    c, p = random_inputs(rng, model.config, 2)
    with pytest.raises(ValueError):
        predict_batch(model, c, p, "Train")
    with pytest.raises(ValueError):
        predict_batch(model, c, p, "Test")


def test_batch_equals_per_sample(rng):
    model = build_model(tiny_config(), 1)
    c, p = random_inputs(rng, model.config, 12)
    c[3] = c[7]     # repeated entity exercises the deduplicated branch path
    batch = model.predict(c, p)
    single = np.array([model.predict(c[i:i + 1], p[i:i + 1])[0] for i in range(12)])
    assert np.abs(batch - single).max() < 1e-12


def test_permuting_batch_permutes_predictions(rng):
    model = build_model(tiny_config(), 1)
    c, p = random_inputs(rng, model.config, 10)
    perm = rng.permutation(10)
    assert np.abs(model.predict(c[perm], p[perm]) - model.predict(c, p)[perm]).max() < 1e-12


def test_input_width_mismatch(rng):
    model = build_model(tiny_config(), 0)
    c, p = random_inputs(rng, model.config, 2)
    with pytest.raises(ConfigError, match="width"):
        model.predict(c[:, :10], p)
    with pytest.raises(ConfigError, match="mismatch"):
        model.predict(c, p[:1])


@pytest.mark.parametrize("variant,dims", [("CnnSim", {"drug_sim_dim": 5}),
                                          ("SimCnn", {"target_sim_dim": 4}),
                                          ("SimSim", {"drug_sim_dim": 5, "target_sim_dim": 4}),
                                          ("SimSim", {"drug_sim_dim": 5, "target_sim_dim": 4,
                                                      "sim_projection": 3})])
def test_similarity_variants_forward(rng, variant, dims):
    cfg = tiny_config(variant=variant, **dims)
    model = build_model(cfg, 0)
    c = rng.random((3, 5)) if not cfg.kind.compound_cnn else random_inputs(rng, cfg, 3)[0]
    p = rng.random((3, 4)) if not cfg.kind.protein_cnn else random_inputs(rng, cfg, 3)[1]
    assert model.predict(c, p).shape == (3,)


def test_full_graph_gradient_probes(rng):
    """Finite differences on 20 random parameter entries of the assembled network."""
    model = build_model(tiny_config(), 3)
    # zero biases put all-zero windows exactly on a ReLU kink; move off it
    for name, t in model.named_parameters():
        if name.endswith(".bias"):
            t.data[...] = rng.uniform(-0.1, 0.1, t.shape)
    c, p = random_inputs(rng, model.config, 5)
    y = rng.normal(size=5)

    def loss_value():
        return float(mse_loss(model.forward(c, p), y).data)

    backward(mse_loss(model.forward(c, p), y))
    params = model.named_parameters()
    probes = [(params[i], int(rng.integers(params[i][1].size)))
              for i in rng.integers(len(params), size=20)]
    for (name, t), k in probes:
        flat = t.data.reshape(-1)
        old = flat[k]
        flat[k] = old + 1e-5
        up = loss_value()
        flat[k] = old - 1e-5
        down = loss_value()
        flat[k] = old
        assert rel_err(t.grad.reshape(-1)[k], (up - down) / 2e-5) < 1e-4, (name, k)


def test_forward_backward_bitwise_deterministic(rng):
    cfg = tiny_config()
    c, p = random_inputs(rng, cfg, 6)
    y = rng.normal(size=6)
    grads = []
    for _ in range(2):
        model = build_model(cfg, 0)
        out = model.forward(c, p, training=True, rng=np.random.default_rng(4))
        backward(mse_loss(out, y))
        grads.append([g.grad.copy() for _, g in model.named_parameters()])
    for a, b in zip(*grads):
        assert np.array_equal(a, b)


def test_checkpoint_round_trip(tmp_path, rng):
    model = build_model(tiny_config(), 2)
    path = tmp_path / "m.dta"
    save_model(model, path)
    again = load_model(path)
    assert again.config == model.config
    for (na, pa), (nb, pb) in zip(model.named_parameters(), again.named_parameters()):
        assert na == nb and np.array_equal(pa.data, pb.data)
    c, p = random_inputs(rng, model.config, 4)
    assert np.array_equal(again.predict(c, p), model.predict(c, p))


def test_checkpoint_layout(tmp_path):
    model = build_model(tiny_config(), 2)
    path = tmp_path / "m.dta"
    save_model(model, path)
    blob = path.read_bytes()
    assert blob[:4] == MAGIC
    (hlen,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8:8 + hlen])
    assert header["config"] == model.config.to_dict()
    first = header["parameters"][0]
    arr = np.frombuffer(blob[8 + hlen:8 + hlen + 8 * int(np.prod(first["shape"]))], "<f8")
    assert np.array_equal(arr, model.named_parameters()[0][1].data.ravel())


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "m.dta"
    save_model(build_model(tiny_config(), 2), path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_model(path)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "m.dta"
    save_model(build_model(tiny_config(), 2), path)
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_model(path)


def _rewrite_header(path, edit):
    blob = path.read_bytes()
    (hlen,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8:8 + hlen])
    edit(header)
    new = json.dumps(header).encode()
    path.write_bytes(MAGIC + struct.pack("<I", len(new)) + new + blob[8 + hlen:])


def test_checkpoint_version_mismatch(tmp_path):
    path = tmp_path / "m.dta"
    save_model(build_model(tiny_config(), 2), path)
    _rewrite_header(path, lambda h: h.update(version=2))
    with pytest.raises(CheckpointError, match="version"):
        load_model(path)


def test_checkpoint_manifest_mismatch(tmp_path):
    path = tmp_path / "m.dta"
    save_model(build_model(tiny_config(), 2), path)
    _rewrite_header(path, lambda h: h["config"].update(num_filters_base=3))
    with pytest.raises(CheckpointError):
        load_model(path)
