"""Training loop, cross-validation and hyperparameter search."""

import itertools
import logging
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from ._io import write_json
from .encoding import VocabularyKind, encode_many, load_vocabulary
from .metrics import FoldScores, concordance_index_fast, mse
from .model import ModelConfig, build_model, parameter_count
from .neural import adam_step, backward, mse_loss

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class EntityInputs:
    """Per-entity model inputs; pair ``i`` uses ``drugs[drug_index[i]]`` etc."""
    drugs: np.ndarray
    targets: np.ndarray

    def for_pairs(self, dataset, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return self.drugs[dataset.drug_index[idx]], self.targets[dataset.target_index[idx]]


def prepare_inputs(dataset, config, drug_sim=None, target_sim=None):
    """Label-encode sequences for CNN branches, or take similarity rows."""
    kind = config.kind
    if kind.compound_cnn:
        drugs = encode_many(dataset.smiles, load_vocabulary(VocabularyKind.SMILES),
                            config.smiles_max_len)
    else:
        if drug_sim is None:
            raise TrainingError(f"{kind.value} needs a drug similarity matrix")
        drugs = drug_sim.reorder(dataset.drug_ids).values
    if kind.protein_cnn:
        targets = encode_many(dataset.sequences, load_vocabulary(VocabularyKind.PROTEIN),
                              config.protein_max_len)
    else:
        if target_sim is None:
            raise TrainingError(f"{kind.value} needs a target similarity matrix")
        targets = target_sim.reorder(dataset.target_ids).values
    return EntityInputs(drugs, targets)


@dataclass
class TrainRun:
    config: ModelConfig
    fold_id: int
    epoch_losses: list
    final_model: object
    wall_time_seconds: float = 0.0


def stderr_progress(epoch, loss, seconds):
    print(f"{epoch}\t{loss:.6f}\t{seconds:.2f}", file=sys.stderr, flush=True)


def train_one(dataset, train_indices, config, seed=None, inputs=None, fold_id=-1,
              progress=None):
    """Train a fresh model on ``train_indices`` for ``config.epochs`` epochs.

    Each epoch reshuffles with a generator seeded from ``(seed, epoch)`` and
    walks mini-batches of ``config.batch_size`` (the last one may be short).
    Returns the model and the per-epoch mean training loss.
    """
    seed = config.seed if seed is None else seed
    if config.epochs < 1:
        raise TrainingError("epochs must be >= 1")
    inputs = inputs or prepare_inputs(dataset, config)
    train_indices = np.asarray(train_indices, dtype=np.intp)
    if train_indices.size == 0:
        raise TrainingError("no training interactions")
    if train_indices.min() < 0 or train_indices.max() >= len(dataset):
        raise TrainingError("training index out of range")
    model = build_model(config, rng_seed=seed)
    params = model.named_parameters()
    losses = []
    start = time.perf_counter()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = train_indices[np.random.default_rng([seed, epoch]).permutation(train_indices.size)]
        total = 0.0
        for b, s in enumerate(range(0, order.size, config.batch_size)):
            batch = order[s:s + config.batch_size]
            xd, xt = inputs.for_pairs(dataset, batch)
            pred = model.forward(xd, xt, training=True,
                                 rng=np.random.default_rng([seed, epoch, b]))
            loss = mse_loss(pred, dataset.affinity[batch])
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            backward(loss)
            adam_step(params, model.optimizer_state)
            model.zero_grad()
            total += value * batch.size
        losses.append(total / order.size)
        if progress is not None:
            progress(epoch, losses[-1], time.perf_counter() - t0)
    return TrainRun(config, fold_id, losses, model, time.perf_counter() - start)


def evaluate_model(model, dataset, indices, inputs):
    """(CI, MSE) of an eval-mode model on the given interactions."""
    xd, xt = inputs.for_pairs(dataset, indices)
    pred = model.predict(xd, xt)
    actual = dataset.affinity[np.asarray(indices, dtype=np.intp)]
    return concordance_index_fast(pred, actual), mse(pred, actual)


def _run_fold(dataset, train_idx, eval_idx, config, inputs, fold_id, progress):
    try:
        run = train_one(dataset, train_idx, config, inputs=inputs, fold_id=fold_id,
                        progress=progress)
    except Exception as exc:
        raise TrainingError(f"fold {fold_id}: {exc}") from exc
    ci, err = evaluate_model(run.final_model, dataset, eval_idx, inputs)
    logger.info("fold %d: CI=%.5f MSE=%.5f (%.1fs)", fold_id, ci, err, run.wall_time_seconds)
    return ci, err, run


def _map_folds(tasks, jobs):
    if jobs > 1:
        from joblib import Parallel, delayed
        return Parallel(n_jobs=jobs)(delayed(_run_fold)(*t) for t in tasks)
    return [_run_fold(*t) for t in tasks]


def cross_validate(dataset, fold_plan, config, inputs=None, jobs=1, progress=None):
    """Train on four CV folds, score CI on the fifth, for each of the five folds."""
    inputs = inputs or prepare_inputs(dataset, config)
    tasks = [(dataset, fold_plan.training_indices(exclude_fold=f), fold_plan.train_folds[f],
              config, inputs, f, progress) for f in range(len(fold_plan.train_folds))]
    return FoldScores.from_values([ci for ci, _, _ in _map_folds(tasks, jobs)])


@dataclass(frozen=True)
class SearchSpace:
    num_filters_options: tuple
    compound_filter_lengths: tuple
    protein_filter_lengths: tuple

    def __post_init__(self):
        for name in ("num_filters_options", "compound_filter_lengths", "protein_filter_lengths"):
            values = tuple(int(v) for v in getattr(self, name))
            if not values or min(values) < 1:
                raise ValueError(f"{name} must be a non-empty list of positive ints")
            object.__setattr__(self, name, values)

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["num_filters_options"]), tuple(d["compound_filter_lengths"]),
                   tuple(d["protein_filter_lengths"]))

    def to_dict(self):
        return {"num_filters_options": list(self.num_filters_options),
                "compound_filter_lengths": list(self.compound_filter_lengths),
                "protein_filter_lengths": list(self.protein_filter_lengths)}

    def combinations(self):
        return list(itertools.product(self.num_filters_options, self.compound_filter_lengths,
                                      self.protein_filter_lengths))


@dataclass
class SearchResult:
    best_config: ModelConfig
    table: list = field(default_factory=list)


def grid_search(dataset, fold_plan, space, base_config, inputs=None, jobs=1,
                table_path=None, evaluate=None):
    """Pick the filter count / lengths with the best mean validation CI.

    Ties on mean CI go to the smaller network.  Each row of the result table
    is written to ``table_path`` as soon as it is known, so a failed search
    leaves the finished rows behind.  ``evaluate`` overrides the scoring
    function (``config -> FoldScores``).
    """
    combos = space.combinations()
    if not combos:
        raise ValueError("empty search space")
    if evaluate is None:
        def evaluate(cfg):
            return cross_validate(dataset, fold_plan, cfg, inputs=inputs, jobs=jobs)
    table = []
    best, best_key = None, None
    for n_filters, k_c, k_p in combos:
        cfg = base_config.replace(num_filters_base=n_filters, compound_filter_length=k_c,
                                  protein_filter_length=k_p)
        scores = evaluate(cfg)
        row = {"num_filters_base": n_filters, "compound_filter_length": k_c,
               "protein_filter_length": k_p, "ci": scores.to_dict(),
               "parameter_count": parameter_count(cfg)}
        table.append(row)
        logger.info("search %s -> mean CI %.5f", row, scores.mean)
        if table_path is not None:
            write_json(table_path, {"rows": table})
        key = (scores.mean, -row["parameter_count"])
        if best_key is None or key > best_key:
            best, best_key = cfg, key
    return SearchResult(best, table)


@dataclass
class FinalEvaluation:
    ci: FoldScores
    mse: FoldScores
    runs: list


def final_evaluation(dataset, fold_plan, config, inputs=None, jobs=1, progress=None):
    """Train on each of the five CV training sets and score the held-out test part."""
    inputs = inputs or prepare_inputs(dataset, config)
    test = np.asarray(fold_plan.test_indices, dtype=np.intp)
    tasks = [(dataset, fold_plan.training_indices(exclude_fold=f), test, config, inputs, f,
              progress) for f in range(len(fold_plan.train_folds))]
    results = _map_folds(tasks, jobs)
    return FinalEvaluation(FoldScores.from_values([r[0] for r in results]),
                           FoldScores.from_values([r[1] for r in results]),
                           [r[2] for r in results])


def metrics_document(ci, err, config, **extra):
    """The JSON layout shared by the training and evaluation commands."""
    doc = {"ci": ci.to_dict(), "mse": err.to_dict(), "config": config.to_dict()}
    doc.update(extra)
    return doc
