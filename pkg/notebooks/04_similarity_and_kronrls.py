"""
Similarity matrices and a Kronecker kernel baseline
===================================================

Proteins are compared by normalised Smith-Waterman scores and compounds by
character-trigram Tanimoto overlap.  The two matrices become kernels for a
regularised least-squares model over drug-target pairs.
"""

import numpy as np

from deepdta.dataio import make_fold_plan
from deepdta.kronrls import evaluate_split, select_lambda
from deepdta.metrics import concordance_index_fast, mse
from deepdta.similarity import build_similarity_matrix, normalized_sw, smith_waterman_score
from deepdta.synthetic import make_synthetic_dataset

# %%
# Alignment scores use BLOSUM62 with affine gaps.
a, b = "HEAGAWGHEE", "PAWHEAE"
print("raw score", smith_waterman_score(a, b), "normalised %.3f" % normalized_sw(a, b))

# %%
# Build both matrices for a small dataset.  ``jobs`` spreads rows over threads.
ds = make_synthetic_dataset(n_drugs=15, n_targets=25, seed=3, protein_window=300)
target_sim = build_similarity_matrix(ds.targets, "sw", jobs=2)
drug_sim = build_similarity_matrix(ds.drugs, "tanimoto")
print(target_sim.values.shape, drug_sim.values.shape)
off_diag = (target_sim.values.sum() - np.trace(target_sim.values)) / (25 * 24)
print("mean off-diagonal target similarity %.3f" % off_diag)

# %%
# Choose lambda on the cross-validation folds, then score the held-out part.
plan = make_fold_plan(ds, seed=0)
grid = [10.0 ** p for p in range(-3, 3)]
best, table = select_lambda(ds, plan, grid, drug_sim.values, target_sim.values)
for lam in grid:
    print("lambda %-8g mean CV CI %.4f" % (lam, np.mean(table[lam])))
pred, actual = evaluate_split(ds, plan.training_indices(), plan.test_indices,
                              drug_sim.values, target_sim.values, best)
print("lambda %g: test CI %.4f, MSE %.4f"
      % (best, concordance_index_fast(pred, actual), mse(pred, actual)))
