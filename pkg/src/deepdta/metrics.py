"""Evaluation metrics: concordance index, MSE and the paired t-test."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

# Two-sided 95% critical values of Student's t for df = 1..100.
T_CRITICAL_95 = (
    12.706205, 4.302653, 3.182446, 2.776445, 2.570582,
    2.446912, 2.364624, 2.306004, 2.262157, 2.228139,
    2.200985, 2.178813, 2.160369, 2.144787, 2.131450,
    2.119905, 2.109816, 2.100922, 2.093024, 2.085963,
    2.079614, 2.073873, 2.068658, 2.063899, 2.059539,
    2.055529, 2.051831, 2.048407, 2.045230, 2.042272,
    2.039513, 2.036933, 2.034515, 2.032245, 2.030108,
    2.028094, 2.026192, 2.024394, 2.022691, 2.021075,
    2.019541, 2.018082, 2.016692, 2.015368, 2.014103,
    2.012896, 2.011741, 2.010635, 2.009575, 2.008559,
    2.007584, 2.006647, 2.005746, 2.004879, 2.004045,
    2.003241, 2.002465, 2.001717, 2.000995, 2.000298,
    1.999624, 1.998972, 1.998341, 1.997730, 1.997138,
    1.996564, 1.996008, 1.995469, 1.994945, 1.994437,
    1.993943, 1.993464, 1.992997, 1.992543, 1.992102,
    1.991673, 1.991254, 1.990847, 1.990450, 1.990063,
    1.989686, 1.989319, 1.988960, 1.988610, 1.988268,
    1.987934, 1.987608, 1.987290, 1.986979, 1.986675,
    1.986377, 1.986086, 1.985802, 1.985523, 1.985251,
    1.984984, 1.984723, 1.984467, 1.984217, 1.983972,
)


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionBatch:
    predicted: np.ndarray
    actual: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.predicted, dtype=np.float64).ravel()
        a = np.asarray(self.actual, dtype=np.float64).ravel()
        if p.shape != a.shape:
            raise MetricError(f"predicted has {p.size} values, actual has {a.size}")
        if p.size == 0:
            raise MetricError("empty prediction batch")
        if not (np.isfinite(p).all() and np.isfinite(a).all()):
            raise MetricError("prediction batch contains non-finite values")
        object.__setattr__(self, "predicted", p)
        object.__setattr__(self, "actual", a)


def _as_batch(batch_or_pred, actual=None):
    if isinstance(batch_or_pred, PredictionBatch):
        return batch_or_pred
    return PredictionBatch(batch_or_pred, actual)


@dataclass(frozen=True)
class FoldScores:
    per_fold: tuple
    mean: float
    std: float

    @classmethod
    def from_values(cls, values):
        v = np.asarray(values, dtype=np.float64)
        if v.size == 0:
            raise MetricError("no fold scores")
        # population standard deviation over the runs
        return cls(tuple(float(x) for x in v), float(v.mean()), float(v.std()))

    def to_dict(self):
        return {"per_fold": list(self.per_fold), "mean": self.mean, "std": self.std}


def _ci_from_counts(doubled_concordant, comparable):
    if comparable == 0:
        raise MetricError("CI undefined: all actual values are equal")
    return doubled_concordant / (2.0 * comparable)


def concordance_index(batch_or_pred, actual=None, chunk=2048):
    """Concordance index by direct enumeration of all pairs.

    Pairs with ``actual[i] > actual[j]`` count 1 when ``pred[i] > pred[j]``,
    0.5 on a prediction tie and 0 otherwise; pairs tied in ``actual`` are
    skipped entirely.  Memory is bounded by processing ``chunk`` rows at once.
    """
    b = _as_batch(batch_or_pred, actual)
    p, a = b.predicted, b.actual
    doubled = 0
    comparable = 0
    for start in range(0, a.size, chunk):
        ai = a[start:start + chunk, None]
        pi = p[start:start + chunk, None]
        ordered = ai > a[None, :]
        comparable += int(np.count_nonzero(ordered))
        doubled += 2 * int(np.count_nonzero(ordered & (pi > p[None, :])))
        doubled += int(np.count_nonzero(ordered & (pi == p[None, :])))
    return _ci_from_counts(doubled, comparable)


def concordance_index_fast(batch_or_pred, actual=None):
    """Same value as :func:`concordance_index` in O(n log n).

    Items are visited in ascending order of ``actual``, one tie group at a
    time.  A Fenwick tree over prediction ranks holds every item with a
    strictly smaller actual value, so each item can query how many of those
    it out-predicts or ties.  Counts are kept as Python integers.
    """
    b = _as_batch(batch_or_pred, actual)
    p, a = b.predicted, b.actual
    ranks = np.unique(p, return_inverse=True)[1].ravel() + 1
    size = int(ranks.max())
    tree = [0] * (size + 1)

    def prefix(i):
        total = 0
        while i > 0:
            total += tree[i]
            i -= i & -i
        return total

    def add(i):
        while i <= size:
            tree[i] += 1
            i += i & -i

    order = np.argsort(a, kind="stable")
    a_sorted = a[order]
    ranks_sorted = ranks[order].tolist()
    boundaries = (np.flatnonzero(np.diff(a_sorted)) + 1).tolist()
    starts = [0, *boundaries]
    ends = [*boundaries, a.size]
    doubled = 0
    comparable = 0
    inserted = 0
    for s, e in zip(starts, ends):
        group = ranks_sorted[s:e]
        if inserted:
            for r in group:
                below = prefix(r - 1)
                doubled += below + prefix(r)
            comparable += inserted * (e - s)
        for r in group:
            add(r)
        inserted += e - s
    return _ci_from_counts(doubled, comparable)


def mse(batch_or_pred, actual=None):
    b = _as_batch(batch_or_pred, actual)
    d = b.predicted - b.actual
    return float(np.dot(d, d) / d.size)


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    significant_at_95: bool
    p_below_threshold: Optional[float]
    degenerate: bool = False


def t_critical_95(df):
    if df < 1:
        raise MetricError("t-test needs at least two paired scores")
    if df > len(T_CRITICAL_95):
        raise MetricError(f"critical value table covers df <= {len(T_CRITICAL_95)}")
    return T_CRITICAL_95[df - 1]


def paired_t_test(scores_a, scores_b):
    """Two-sided paired t-test at the 95% level.

    ``p_below_threshold`` is 0.05 when the difference is significant (the
    p-value is known to lie below it) and ``None`` otherwise.  Zero-variance
    differences are flagged as degenerate: identical scores are not
    significant, a constant non-zero shift is.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError(f"paired scores must be equal-length vectors, got {a.shape} and {b.shape}")
    n = a.size
    crit = t_critical_95(n - 1)
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(float("nan"), False, None, degenerate=True)
        return TTestResult(float(np.copysign(np.inf, mean)), True, 0.05, degenerate=True)
    t = float(mean / (sd / np.sqrt(n)))
    significant = abs(t) > crit
    return TTestResult(t, significant, 0.05 if significant else None)
