"""Pairwise similarity: Smith-Waterman for proteins, n-gram Tanimoto for SMILES.

Local alignment uses affine gaps: a gap of length ``L`` costs
``gap_open + (L - 1) * gap_extend``.  Gaps in the two sequences may follow
each other directly.
"""

import logging
from dataclasses import dataclass
from importlib import resources

import numba
import numpy as np

from ._io import atomic_open

logger = logging.getLogger(__name__)

PROTEIN_ALPHABET = "ABCDEFGHIKLMNOPQRSTUVWXYZ"


class SimilarityError(ValueError):
    pass


def _load_blosum62():
    text = resources.files("deepdta.data").joinpath("blosum62.txt").read_text("utf-8")
    rows = [line.split() for line in text.splitlines() if line and not line.startswith("#")]
    header = rows[0]
    table = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    order = [header.index(ch) for ch in PROTEIN_ALPHABET]
    return table[np.ix_(order, order)]


@dataclass(frozen=True)
class AlignmentParams:
    substitution: np.ndarray   # 25 x 25, indexed by PROTEIN_ALPHABET
    gap_open: float = 10.0
    gap_extend: float = 0.5
    alphabet: str = PROTEIN_ALPHABET

    def __post_init__(self):
        s = np.asarray(self.substitution, dtype=np.float64)
        k = len(self.alphabet)
        if s.shape != (k, k):
            raise SimilarityError(f"substitution table must be {k}x{k}, got {s.shape}")
        if not np.array_equal(s, s.T):
            raise SimilarityError("substitution table must be symmetric")
        if not (self.gap_open >= self.gap_extend > 0):
            raise SimilarityError("need gap_open >= gap_extend > 0")
        object.__setattr__(self, "substitution", s)

    @classmethod
    def default(cls):
        return cls(_load_blosum62())

    def score(self, x, y):
        return self.substitution[self.alphabet.index(x), self.alphabet.index(y)]

    def to_codes(self, seq):
        codes = np.empty(len(seq), dtype=np.int64)
        for pos, ch in enumerate(seq):
            k = self.alphabet.find(ch)
            if k < 0:
                raise SimilarityError(f"unknown residue {ch!r} at position {pos}")
            codes[pos] = k
        return codes


@numba.njit(cache=True, nogil=True)
def _gotoh_score(a, b, sub, gap_open, gap_extend):
    m = b.shape[0]
    h_prev = np.zeros(m + 1)
    h_cur = np.zeros(m + 1)
    f = np.full(m + 1, -np.inf)   # vertical gap state per column
    best = 0.0
    for i in range(a.shape[0]):
        row = sub[a[i]]
        e = -np.inf               # horizontal gap state along the row
        h_cur[0] = 0.0
        for j in range(1, m + 1):
            e = max(h_cur[j - 1] - gap_open, e - gap_extend)
            f[j] = max(h_prev[j] - gap_open, f[j] - gap_extend)
            h = h_prev[j - 1] + row[b[j - 1]]
            if e > h:
                h = e
            if f[j] > h:
                h = f[j]
            if h < 0.0:
                h = 0.0
            h_cur[j] = h
            if h > best:
                best = h
        h_prev, h_cur = h_cur, h_prev
    return best


_DEFAULT_PARAMS = None


def default_params():
    global _DEFAULT_PARAMS
    if _DEFAULT_PARAMS is None:
        _DEFAULT_PARAMS = AlignmentParams.default()
    return _DEFAULT_PARAMS


def smith_waterman_score(a, b, params=None):
    """Best local alignment score of ``a`` and ``b`` (always >= 0)."""
    params = params or default_params()
    if not a or not b:
        raise SimilarityError("sequences must be non-empty")
    return float(_gotoh_score(params.to_codes(a), params.to_codes(b), params.substitution,
                              float(params.gap_open), float(params.gap_extend)))


def normalized_sw(a, b, params=None, self_a=None, self_b=None):
    """``SW(a, b) / sqrt(SW(a, a) * SW(b, b))`` clamped to [0, 1]."""
    params = params or default_params()
    sa = smith_waterman_score(a, a, params) if self_a is None else self_a
    sb = smith_waterman_score(b, b, params) if self_b is None else self_b
    if sa <= 0 or sb <= 0:
        raise SimilarityError("zero self-alignment score; cannot normalise")
    value = smith_waterman_score(a, b, params) / np.sqrt(sa * sb)
    return float(min(1.0, max(0.0, value)))


def _ngrams(s, n):
    if len(s) < n:
        return {s}
    return {s[i:i + n] for i in range(len(s) - n + 1)}


def ngram_tanimoto(a, b, n=3):
    """Jaccard/Tanimoto overlap of the character n-gram sets of two strings.

    Strings shorter than ``n`` contribute themselves as a single gram.
    """
    if n < 1:
        raise SimilarityError(f"n must be >= 1, got {n}")
    if not a or not b:
        raise SimilarityError("sequences must be non-empty")
    ga, gb = _ngrams(a, n), _ngrams(b, n)
    return len(ga & gb) / len(ga | gb)


@dataclass(frozen=True)
class SimilarityMatrix:
    entity_ids: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        k = len(self.entity_ids)
        if v.shape != (k, k):
            raise SimilarityError(f"matrix shape {v.shape} does not match {k} ids")
        if len(set(self.entity_ids)) != k:
            raise SimilarityError("duplicate entity ids")
        if not np.isfinite(v).all() or v.min() < 0.0 or v.max() > 1.0:
            raise SimilarityError("similarity values must lie in [0, 1]")
        if np.abs(v - v.T).max(initial=0.0) > 1e-9:
            raise SimilarityError("similarity matrix is not symmetric")
        object.__setattr__(self, "entity_ids", tuple(self.entity_ids))
        object.__setattr__(self, "values", v)

    def reorder(self, ids):
        """Rows/columns rearranged to follow ``ids``."""
        pos = {e: i for i, e in enumerate(self.entity_ids)}
        missing = [e for e in ids if e not in pos]
        if missing:
            raise SimilarityError(f"ids missing from similarity matrix: {missing[:5]}")
        idx = [pos[e] for e in ids]
        return SimilarityMatrix(tuple(ids), self.values[np.ix_(idx, idx)])


def build_similarity_matrix(entities, measure, jobs=1):
    """Full symmetric matrix over ``entities`` (a list of ``(id, sequence)``).

    ``measure`` is ``"sw"``, ``"tanimoto"`` or any callable ``f(a, b) -> float``.
    Only the upper triangle is evaluated; the diagonal is fixed at 1.  With
    ``jobs > 1`` rows are spread over threads (the alignment kernel releases
    the GIL); each entry is still computed once, so the result is unchanged.
    """
    entities = list(entities)
    if not entities:
        raise SimilarityError("need at least one entity")
    ids = [e for e, _ in entities]
    seqs = [s for _, s in entities]
    if measure == "sw":
        params = default_params()
        selfs = []
        for eid, s in entities:
            try:
                selfs.append(smith_waterman_score(s, s, params))
            except SimilarityError as exc:
                raise SimilarityError(f"{eid}: {exc}") from None

        def fn(i, j):
            return normalized_sw(seqs[i], seqs[j], params, selfs[i], selfs[j])
    elif measure == "tanimoto":
        def fn(i, j):
            return ngram_tanimoto(seqs[i], seqs[j])
    elif callable(measure):
        def fn(i, j):
            return measure(seqs[i], seqs[j])
    else:
        raise SimilarityError(f"unknown similarity measure {measure!r}")
    k = len(entities)

    def upper_row(i):
        row = np.empty(k - i - 1)
        for j in range(i + 1, k):
            try:
                row[j - i - 1] = fn(i, j)
            except SimilarityError as exc:
                raise SimilarityError(f"({ids[i]}, {ids[j]}): {exc}") from None
        return row

    if jobs > 1:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=jobs, backend="threading")(delayed(upper_row)(i) for i in range(k))
    else:
        rows = [upper_row(i) for i in range(k)]
    values = np.eye(k)
    for i, row in enumerate(rows):
        values[i, i + 1:] = row
        values[i + 1:, i] = row
    return SimilarityMatrix(tuple(ids), values)


def export_similarity_matrix(matrix, path):
    with atomic_open(path) as fh:
        fh.write("ids\t" + "\t".join(matrix.entity_ids) + "\n")
        for eid, row in zip(matrix.entity_ids, matrix.values):
            fh.write(eid + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


def import_similarity_matrix(path):
    """Read a matrix written by :func:`export_similarity_matrix` (or by hand)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\r\n") for ln in fh if ln.strip()]
    if not lines:
        raise SimilarityError(f"{path}: empty file")
    header = lines[0].split("\t")
    if header[0] != "ids":
        raise SimilarityError(f"{path}: first line must start with 'ids'")
    ids = header[1:]
    if len(lines) - 1 != len(ids):
        raise SimilarityError(f"{path}: {len(ids)} column ids but {len(lines) - 1} rows")
    values = np.empty((len(ids), len(ids)))
    for r, line in enumerate(lines[1:]):
        parts = line.split("\t")
        if parts[0] != ids[r]:
            raise SimilarityError(f"{path}:{r + 2}: row id {parts[0]!r} does not match column id {ids[r]!r}")
        if len(parts) != len(ids) + 1:
            raise SimilarityError(f"{path}:{r + 2}: expected {len(ids)} values")
        try:
            values[r] = [float(x) for x in parts[1:]]
        except ValueError:
            raise SimilarityError(f"{path}:{r + 2}: non-numeric entry") from None
    if not np.isfinite(values).all() or values.min() < 0.0 or values.max() > 1.0:
        bad = np.argwhere(~((values >= 0.0) & (values <= 1.0)))[0]
        raise SimilarityError(
            f"{path}: entry ({ids[bad[0]]}, {ids[bad[1]]}) = {values[tuple(bad)]} outside [0, 1]")
    try:
        return SimilarityMatrix(tuple(ids), values)
    except SimilarityError as exc:
        raise SimilarityError(f"{path}: {exc}") from None
