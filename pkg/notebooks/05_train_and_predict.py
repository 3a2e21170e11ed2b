"""
Training the two-branch CNN
===========================

A reduced model trained for a few epochs on synthetic data, then scored,
saved, reloaded and used for predictions on raw strings.
"""

import tempfile
from pathlib import Path

import numpy as np

from deepdta.dataio import make_fold_plan
from deepdta.encoding import VocabularyKind, encode_many, load_vocabulary
from deepdta.model import ModelConfig, load_model, parameter_count, predict_batch, save_model
from deepdta.synthetic import make_synthetic_dataset
from deepdta.train import evaluate_model, prepare_inputs, stderr_progress, train_one

ds = make_synthetic_dataset(n_drugs=30, n_targets=60, seed=0, protein_window=400)
plan = make_fold_plan(ds, seed=0)

# %%
# Small filters and short inputs keep this to a minute or so on one core.
config = ModelConfig(num_filters_base=8, embed_dim=16, protein_max_len=400,
                     fc_sizes=(128, 128, 64), epochs=8, batch_size=64)
print("parameters:", parameter_count(config))

inputs = prepare_inputs(ds, config)
run = train_one(ds, plan.training_indices(), config, inputs=inputs, progress=stderr_progress)
ci, err = evaluate_model(run.final_model, ds, np.asarray(plan.test_indices), inputs)
print("test CI %.4f, MSE %.4f" % (ci, err))

# %%
# Checkpoints hold the config and every parameter array.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.dta"
    save_model(run.final_model, path)
    model = load_model(path)

smiles = ["CC(=O)Oc1ccccc1C(=O)O", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C"]
proteins = ["MKTAYIAKQRQISFVKSHFSRQ", "MSTNPKPQRKTKRNTNRRPQDVKFPGG"]
c = encode_many(smiles, load_vocabulary(VocabularyKind.SMILES), config.smiles_max_len)
p = encode_many(proteins, load_vocabulary(VocabularyKind.PROTEIN), config.protein_max_len)
print(predict_batch(model, c, p).data)
