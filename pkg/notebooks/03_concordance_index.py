"""
Concordance index
=================

CI is the share of comparable pairs whose predicted order agrees with the
true order, with tied predictions counted as half.  The package has a direct
pairwise version and an O(n log n) version; both give identical values.
"""

import time

import numpy as np

from deepdta.metrics import (FoldScores, concordance_index, concordance_index_fast, mse,
                             paired_t_test)

rng = np.random.default_rng(1)

# %%
# Small cases: perfect order, reversed order and constant predictions.
actual = np.array([1.0, 2.0, 3.0, 4.0])
print(concordance_index_fast([1, 2, 3, 4], actual), concordance_index_fast([4, 3, 2, 1], actual),
      concordance_index_fast([0, 0, 0, 0], actual))

# %%
# Noisy predictions with many ties in both arrays.
n = 3000
actual = np.round(rng.normal(size=n), 1)
pred = np.round(actual + rng.normal(scale=0.7, size=n), 1)
t0 = time.perf_counter()
slow = concordance_index(pred, actual)
t1 = time.perf_counter()
fast = concordance_index_fast(pred, actual)
t2 = time.perf_counter()
print("pairwise %.6f in %.3fs, fast %.6f in %.4fs" % (slow, t1 - t0, fast, t2 - t1))
assert slow == fast
print("MSE %.4f" % mse(pred, actual))

# %%
# Fold scores summarise five cross-validation runs, and a paired t-test
# compares two methods fold by fold.
a = FoldScores.from_values([0.871, 0.880, 0.875, 0.869, 0.883])
b = FoldScores.from_values([0.862, 0.870, 0.866, 0.865, 0.872])
print(a.mean, a.std)
print(paired_t_test(a.per_fold, b.per_fold))
