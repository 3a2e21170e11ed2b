"""Dataset loading, affinity transforms and the six-part train/test split.

A dataset directory holds three tab-separated files::

    ligands.tsv      drug_id <TAB> SMILES
    proteins.tsv     target_id <TAB> sequence
    affinities.tsv   drug_id <TAB> target_id <TAB> value   (header optional)
"""

import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from ._io import write_json

logger = logging.getLogger(__name__)

N_PARTS = 6
N_FOLDS = N_PARTS - 1


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class InteractionDataset:
    drugs: tuple        # (drug_id, smiles)
    targets: tuple      # (target_id, sequence)
    drug_index: np.ndarray
    target_index: np.ndarray
    affinity: np.ndarray

    def __post_init__(self):
        n = self.affinity.shape[0]
        if not (self.drug_index.shape == self.target_index.shape == (n,)):
            raise DataError("interaction arrays have inconsistent lengths")
        if n and (self.drug_index.min() < 0 or self.drug_index.max() >= len(self.drugs)):
            raise DataError("drug index out of range")
        if n and (self.target_index.min() < 0 or self.target_index.max() >= len(self.targets)):
            raise DataError("target index out of range")
        if not np.isfinite(self.affinity).all():
            raise DataError("non-finite affinity value")
        keys = self.drug_index.astype(np.int64) * len(self.targets) + self.target_index
        if np.unique(keys).size != n:
            raise DataError("duplicate (drug, target) pair")

    @property
    def interactions(self):
        return list(zip(self.drug_index.tolist(), self.target_index.tolist(),
                        self.affinity.tolist()))

    def __len__(self):
        return int(self.affinity.shape[0])

    @property
    def drug_ids(self):
        return [d for d, _ in self.drugs]

    @property
    def target_ids(self):
        return [t for t, _ in self.targets]

    @property
    def smiles(self):
        return [s for _, s in self.drugs]

    @property
    def sequences(self):
        return [s for _, s in self.targets]

    def subset(self, indices):
        """Same entities, only the interactions at ``indices``."""
        idx = np.asarray(indices, dtype=np.intp)
        return InteractionDataset(self.drugs, self.targets, self.drug_index[idx],
                                  self.target_index[idx], self.affinity[idx])

    def affinity_matrix(self):
        """``targets x drugs`` matrix with NaN for unobserved pairs."""
        y = np.full((len(self.targets), len(self.drugs)), np.nan)
        y[self.target_index, self.drug_index] = self.affinity
        return y

    def summary(self):
        return {"targets": len(self.targets), "drugs": len(self.drugs),
                "interactions": len(self)}


def read_entities(path, kind):
    """Parse an ``id<TAB>sequence`` file; returns (entries, id -> position)."""
    entries, seen = [], {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise DataError(f"{path}:{lineno}: expected '{kind}_id<TAB>sequence'")
            if parts[0] in seen:
                raise DataError(f"{path}:{lineno}: duplicate {kind} id {parts[0]!r}")
            seen[parts[0]] = len(entries)
            entries.append((parts[0], parts[1].strip()))
    if not entries:
        raise DataError(f"{path}: no {kind} entries")
    return entries, seen


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_dataset(directory):
    """Read and validate ``ligands.tsv``, ``proteins.tsv`` and ``affinities.tsv``."""
    directory = os.fspath(directory)
    drugs, drug_pos = read_entities(os.path.join(directory, "ligands.tsv"), "drug")
    targets, target_pos = read_entities(os.path.join(directory, "proteins.tsv"), "target")
    path = os.path.join(directory, "affinities.tsv")
    di, ti, val = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            if not _is_number(parts[2]):
                if lineno == 1:
                    continue  # header row
                raise DataError(f"{path}:{lineno}: affinity {parts[2]!r} is not a number")
            d, t = parts[0], parts[1]
            if d not in drug_pos:
                raise DataError(f"{path}:{lineno}: unknown drug id {d!r}")
            if t not in target_pos:
                raise DataError(f"{path}:{lineno}: unknown target id {t!r}")
            value = float(parts[2])
            if not math.isfinite(value):
                raise DataError(f"{path}:{lineno}: non-finite affinity")
            di.append(drug_pos[d])
            ti.append(target_pos[t])
            val.append(value)
    if not val:
        raise DataError(f"{path}: no interactions")
    try:
        ds = InteractionDataset(tuple(drugs), tuple(targets), np.array(di, dtype=np.int64),
                                np.array(ti, dtype=np.int64), np.array(val, dtype=np.float64))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    logger.info("loaded %s: %d targets, %d drugs, %d interactions",
                directory, len(targets), len(drugs), len(ds))
    return ds


def save_dataset(dataset, directory):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "ligands.tsv"), "w", encoding="utf-8") as fh:
        fh.writelines(f"{d}\t{s}\n" for d, s in dataset.drugs)
    with open(os.path.join(directory, "proteins.tsv"), "w", encoding="utf-8") as fh:
        fh.writelines(f"{t}\t{s}\n" for t, s in dataset.targets)
    with open(os.path.join(directory, "affinities.tsv"), "w", encoding="utf-8") as fh:
        fh.write("drug_id\ttarget_id\tvalue\n")
        for d, t, v in dataset.interactions:
            fh.write(f"{dataset.drugs[d][0]}\t{dataset.targets[t][0]}\t{v!r}\n")


def pkd_transform(kd_nanomolar):
    """Dissociation constant in nM to pKd: ``-log10(Kd / 1e9)``."""
    kd = np.asarray(kd_nanomolar, dtype=np.float64)
    if np.any(~(kd > 0)):
        raise DataError("Kd must be strictly positive")
    out = -np.log10(kd / 1e9)
    return float(out) if out.ndim == 0 else out


def kiba_transform(scores):
    """Negate the scores and shift so the smallest transformed value is 0."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise DataError("kiba_transform needs at least one score")
    neg = -s
    # subtracting the minimum (rather than adding its absolute value) also
    # lands on 0 when every negated score is positive
    return neg - neg.min()


@dataclass(frozen=True)
class FoldPlan:
    seed: int
    test_indices: tuple
    train_folds: tuple  # five tuples

    def __post_init__(self):
        if len(self.train_folds) != N_FOLDS:
            raise DataError(f"fold plan needs {N_FOLDS} CV folds, got {len(self.train_folds)}")

    @property
    def parts(self):
        return (self.test_indices, *self.train_folds)

    @property
    def n_interactions(self):
        return sum(len(p) for p in self.parts)

    def training_indices(self, exclude_fold=None):
        """Union of CV folds, optionally leaving one out for validation."""
        chosen = [f for i, f in enumerate(self.train_folds) if i != exclude_fold]
        return np.sort(np.concatenate([np.asarray(f, dtype=np.int64) for f in chosen]))

    def validate(self, n_interactions=None):
        all_idx = np.concatenate([np.asarray(p, dtype=np.int64) for p in self.parts])
        total = all_idx.size if n_interactions is None else n_interactions
        if np.unique(all_idx).size != all_idx.size:
            raise DataError("fold plan parts overlap")
        if all_idx.size != total or (total and (all_idx.min() != 0 or all_idx.max() != total - 1)):
            raise DataError(f"fold plan parts do not cover interactions 0..{total - 1}")
        sizes = [len(p) for p in self.parts]
        if max(sizes) - min(sizes) > 1:
            raise DataError(f"fold plan part sizes differ by more than one: {sizes}")

    def to_dict(self):
        return {"seed": self.seed, "test": list(self.test_indices),
                "folds": [list(f) for f in self.train_folds]}


def make_fold_plan(dataset_or_count, seed):
    """Shuffle interactions with ``seed`` and cut them into six near-equal parts.

    Part 0 is the held-out test set, parts 1-5 the cross-validation folds.
    """
    n = dataset_or_count if isinstance(dataset_or_count, int) else len(dataset_or_count)
    if n < N_PARTS:
        raise DataError(f"need at least {N_PARTS} interactions to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    parts = [tuple(sorted(p.tolist())) for p in np.array_split(perm, N_PARTS)]
    plan = FoldPlan(int(seed), parts[0], tuple(parts[1:]))
    plan.validate(n)
    return plan


def save_fold_plan(plan, path):
    write_json(path, plan.to_dict())


def load_fold_plan(path, n_interactions=None):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        plan = FoldPlan(int(raw["seed"]), tuple(int(i) for i in raw["test"]),
                        tuple(tuple(int(i) for i in f) for f in raw["folds"]))
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed fold plan ({exc})") from None
    try:
        plan.validate(n_interactions)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    return plan
