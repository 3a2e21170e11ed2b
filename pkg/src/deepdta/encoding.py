"""Character-level label encoding of SMILES strings and protein sequences."""

from dataclasses import dataclass
from enum import Enum
from importlib import resources

import numpy as np


class VocabularyKind(str, Enum):
    SMILES = "Smiles"
    PROTEIN = "Protein"


VOCAB_SIZES = {VocabularyKind.SMILES: 64, VocabularyKind.PROTEIN: 25}
VOCAB_FILES = {VocabularyKind.SMILES: "smiles_vocab.tsv",
               VocabularyKind.PROTEIN: "protein_vocab.tsv"}


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    kind: VocabularyKind
    symbol_to_index: dict

    @property
    def size(self):
        return len(self.symbol_to_index)

    def symbols(self):
        return sorted(self.symbol_to_index, key=self.symbol_to_index.get)

    def to_tsv(self):
        return "".join(f"{s}\t{i}\n" for s, i in
                       sorted(self.symbol_to_index.items(), key=lambda kv: kv[1]))

    @classmethod
    def from_tsv(cls, kind, text):
        pairs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or len(parts[0]) != 1:
                raise EncodingError(f"vocabulary line {lineno}: expected 'symbol<TAB>index'")
            pairs.append((parts[0], int(parts[1])))
        vocab = build_vocabulary(kind, [s for s, _ in sorted(pairs, key=lambda p: p[1])])
        for s, i in pairs:
            if vocab.symbol_to_index[s] != i:
                raise EncodingError(f"vocabulary indices are not contiguous from 1 (at {s!r})")
        return vocab


@dataclass(frozen=True)
class EncodedSequence:
    indices: np.ndarray
    true_length: int
    max_length: int


def build_vocabulary(kind, symbol_list):
    """Map the i-th symbol (1-based) of ``symbol_list`` to index i."""
    kind = VocabularyKind(kind)
    if not symbol_list:
        raise EncodingError("empty symbol list")
    if len(set(symbol_list)) != len(symbol_list):
        dupes = sorted({s for s in symbol_list if symbol_list.count(s) > 1})
        raise EncodingError(f"duplicate symbols: {dupes}")
    for s in symbol_list:
        if len(s) != 1:
            raise EncodingError(f"symbols must be single characters, got {s!r}")
    expected = VOCAB_SIZES[kind]
    if len(symbol_list) != expected:
        raise EncodingError(f"{kind.value} vocabulary needs {expected} symbols, got {len(symbol_list)}")
    return Vocabulary(kind, {s: i for i, s in enumerate(symbol_list, 1)})


def vocabulary_text(kind):
    kind = VocabularyKind(kind)
    return resources.files("deepdta.data").joinpath(VOCAB_FILES[kind]).read_text("utf-8")


def load_vocabulary(kind, path=None):
    """Load the shipped vocabulary for ``kind``, or one from ``path``."""
    kind = VocabularyKind(kind)
    if path is None:
        text = vocabulary_text(kind)
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return Vocabulary.from_tsv(kind, text)


def encode(sequence, vocab, max_length):
    """Label-encode ``sequence``: keep the prefix, pad with 0 up to ``max_length``."""
    if max_length < 1:
        raise EncodingError(f"max_length must be >= 1, got {max_length}")
    lookup = vocab.symbol_to_index
    indices = np.zeros(max_length, dtype=np.int64)
    for pos, ch in enumerate(sequence):
        idx = lookup.get(ch)
        if idx is None:
            raise EncodingError(
                f"character {ch!r} at position {pos} is not in the {vocab.kind.value} vocabulary"
            )
        if pos < max_length:
            indices[pos] = idx
    return EncodedSequence(indices, len(sequence), max_length)


def encode_many(sequences, vocab, max_length):
    """Stack encodings into an ``[n, max_length]`` int array."""
    out = np.zeros((len(sequences), max_length), dtype=np.int64)
    for row, seq in enumerate(sequences):
        try:
            out[row] = encode(seq, vocab, max_length).indices
        except EncodingError as exc:
            raise EncodingError(f"sequence {row}: {exc}") from None
    return out


def decode(encoded, vocab):
    inverse = {i: s for s, i in vocab.symbol_to_index.items()}
    return "".join(inverse[int(i)] for i in encoded.indices if i != 0)


def default_max_lengths(dataset_kind):
    """(smiles_max, protein_max) used for the two benchmark datasets."""
    key = str(getattr(dataset_kind, "value", dataset_kind)).lower()
    if key == "davis":
        return 85, 1200
    if key == "kiba":
        return 100, 1000
    raise ValueError(f"no default lengths for dataset {dataset_kind!r}; pass them explicitly")
