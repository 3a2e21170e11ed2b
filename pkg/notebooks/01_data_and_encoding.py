"""
Interaction data, label encoding and fold plans
===============================================

A tour of the data layer on a small synthetic dataset: what an interaction
table looks like, how sequences become integer arrays, and how the six-part
split is cut.
"""

import numpy as np

from deepdta.dataio import kiba_transform, make_fold_plan, pkd_transform
from deepdta.encoding import VocabularyKind, decode, encode, encode_many, load_vocabulary
from deepdta.synthetic import make_synthetic_dataset

# %%
# A synthetic dataset stands in for the benchmark files.  Every drug is paired
# with every target, and affinities sit on a pKd-like scale with a floor at 5.
ds = make_synthetic_dataset(n_drugs=12, n_targets=20, seed=0)
print(len(ds), "interactions,", len(ds.drugs), "drugs,", len(ds.targets), "targets")
print("first drug:", ds.drugs[0])
print("affinity range: %.2f .. %.2f" % (ds.affinity.min(), ds.affinity.max()))
print("share at the floor: %.2f" % np.mean(ds.affinity == ds.affinity.min()))

# %%
# Raw measurements are converted before training.  Dissociation constants in
# nanomolar become pKd, and KIBA scores are flipped and shifted to start at 0.
print(pkd_transform([1.0, 10.0, 10000.0]))
print(kiba_transform([11.1, 12.5, 3.2]))

# %%
# Label encoding maps each character to its vocabulary index.  Index 0 is
# padding; longer sequences are truncated.
smiles = load_vocabulary(VocabularyKind.SMILES)
protein = load_vocabulary(VocabularyKind.PROTEIN)
enc = encode("CN=C=O", smiles, 10)
print(enc.indices, "true length", enc.true_length)
print(decode(enc, smiles))

batch = encode_many([seq for _, seq in ds.targets[:3]], protein, 1200)
print("protein batch", batch.shape, "non-padding per row", (batch > 0).sum(axis=1))

# %%
# The fold plan shuffles interaction indices with a fixed seed and cuts six
# near-equal parts: one held-out test part and five cross-validation folds.
plan = make_fold_plan(ds, seed=0)
print("part sizes:", [len(p) for p in plan.parts])
print("training pool without fold 2:", plan.training_indices(exclude_fold=2).size)
assert make_fold_plan(ds, seed=0) == plan
