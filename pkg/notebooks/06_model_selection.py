"""
Grid search and the final five-run evaluation
=============================================

Filter counts and lengths are chosen by mean cross-validation CI.  The winner
is then retrained five times, each time leaving one fold out, and scored on
the held-out part.
"""

from deepdta.dataio import make_fold_plan
from deepdta.model import ModelConfig
from deepdta.synthetic import make_synthetic_dataset
from deepdta.train import SearchSpace, final_evaluation, grid_search, metrics_document

ds = make_synthetic_dataset(n_drugs=12, n_targets=20, seed=5, protein_window=200)
plan = make_fold_plan(ds, seed=0)
base = ModelConfig(embed_dim=8, protein_max_len=200, fc_sizes=(32, 32, 16), epochs=12,
                   batch_size=16, learning_rate=0.005)

# %%
# A two-by-one-by-two grid: four configurations, five folds each.
space = SearchSpace(num_filters_options=(4, 8), compound_filter_lengths=(4,),
                    protein_filter_lengths=(4, 8))
result = grid_search(ds, plan, space, base)
for row in result.table:
    print(row)
best = result.best_config
print("chosen:", best.num_filters_base, best.compound_filter_length, best.protein_filter_length)

# %%
# Five retrainings give a mean and a spread for both metrics.
final = final_evaluation(ds, plan, best)
doc = metrics_document(final.ci, final.mse, best)
print("CI %.4f +/- %.4f" % (doc["ci"]["mean"], doc["ci"]["std"]))
print("MSE %.4f +/- %.4f" % (doc["mse"]["mean"], doc["mse"]["std"]))
