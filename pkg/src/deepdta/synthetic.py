"""Seeded synthetic benchmark shaped like the Davis kinase set.

Proteins descend from a handful of family ancestors (so Smith-Waterman
similarity has structure) and carry short binding motifs.  Compounds are
SMILES-like strings assembled from fragments, some of which act as
pharmacophores.  A compound-target pair binds when its pharmacophores match
the target's motifs; weak pairs sit on a floor of pKd 5, as in Davis.

Run ``python -m deepdta.synthetic OUT_DIR`` to write a dataset directory.
"""

import argparse
import sys

import numpy as np

from .dataio import InteractionDataset, save_dataset

AMINO = "ACDEFGHIKLMNPQRSTVWY"
FILLER = ["C", "CC", "CCC", "c1ccccc1", "C(C)C", "OC", "CO", "N(C)C", "F", "Cl", "Br",
          "C(F)(F)F", "CCN", "C1CC1", "c1ccncc1", "C(=O)O", "OCC", "S", "C#N", "[nH]1cccc1"]
PHARMACOPHORES = ["C(=O)Nc1ccc", "n1cnc2ncnc", "S(=O)(=O)N", "N1CCN(CC1)", "c1ccc2[nH]ccc2",
                  "C(=O)N[C@@H]", "O=C1NC(=O)", "c1cc(Cl)ccc1", "NC(=N)N", "C#Cc1cccc",
                  "c1nc(N)sc1", "OC(=O)CC"]
FLOOR = 5.0


def _random_protein(rng, length):
    return "".join(rng.choice(list(AMINO), size=length))


def _mutate(rng, seq, rate):
    chars = list(seq)
    hits = rng.random(len(chars)) < rate
    for i in np.flatnonzero(hits):
        chars[i] = AMINO[rng.integers(len(AMINO))]
    return "".join(chars)


def _make_targets(rng, n_targets, motifs, n_families, protein_window):
    lengths = np.clip(rng.lognormal(np.log(720), 0.4, n_targets), 220, 2549).astype(int)
    ancestors = [_random_protein(rng, 2600) for _ in range(n_families)]
    family_motifs = rng.random((n_families, len(motifs))) < 0.3
    family = rng.integers(n_families, size=n_targets)
    seqs, has_motif = [], np.zeros((n_targets, len(motifs)), dtype=bool)
    for t in range(n_targets):
        base = _mutate(rng, ancestors[family[t]][:lengths[t]], rate=0.35)
        mine = family_motifs[family[t]] ^ (rng.random(len(motifs)) < 0.12)
        chars = list(base)
        window = min(len(chars), protein_window)
        for m in np.flatnonzero(mine):
            motif = motifs[m]
            pos = rng.integers(0, window - len(motif))
            chars[pos:pos + len(motif)] = motif
        # planted motifs may overwrite each other; record what survived
        seq = "".join(chars)
        seqs.append(seq)
        has_motif[t] = [motifs[m] in seq[:protein_window] for m in range(len(motifs))]
    return seqs, has_motif


def _make_drugs(rng, n_drugs, smiles_window):
    seqs, has_ph = [], np.zeros((n_drugs, len(PHARMACOPHORES)), dtype=bool)
    for d in range(n_drugs):
        k = rng.integers(1, 4)
        chosen = rng.choice(len(PHARMACOPHORES), size=k, replace=False)
        parts = [PHARMACOPHORES[c] for c in chosen]
        parts += [FILLER[i] for i in rng.integers(len(FILLER), size=rng.integers(5, 13))]
        order = rng.permutation(len(parts))
        smi = "".join(parts[i] for i in order)
        seqs.append(smi)
        has_ph[d] = [p in smi[:smiles_window] for p in PHARMACOPHORES]
    return seqs, has_ph


def make_synthetic_dataset(n_drugs=68, n_targets=442, density=1.0, seed=0,
                           floor_fraction=0.7, noise=0.25, n_families=24,
                           smiles_window=85, protein_window=1100):
    """Build an :class:`InteractionDataset` with pKd-like affinities.

    ``density`` < 1 drops a random share of pairs (a sparse, KIBA-like layout).
    """
    rng = np.random.default_rng(seed)
    motifs = ["".join(rng.choice(list(AMINO), size=6)) for _ in PHARMACOPHORES]
    targets, t_motif = _make_targets(rng, n_targets, motifs, n_families, protein_window)
    drugs, d_ph = _make_drugs(rng, n_drugs, smiles_window)
    weights = rng.uniform(0.8, 2.0, size=len(PHARMACOPHORES))
    match = (d_ph.astype(float) * weights) @ t_motif.T.astype(float)      # drugs x targets
    promiscuity = 0.35 * d_ph.sum(axis=1, keepdims=True)
    receptivity = 0.25 * t_motif.sum(axis=1, keepdims=True).T
    latent = match + promiscuity + receptivity + rng.normal(0.0, noise, match.shape)
    cut = np.quantile(latent, floor_fraction)
    pkd = np.where(latent > cut, FLOOR + 1.2 * (latent - cut), FLOOR)
    pkd = np.round(pkd, 6)
    di, ti = np.meshgrid(np.arange(n_drugs), np.arange(n_targets), indexing="ij")
    di, ti, val = di.ravel(), ti.ravel(), pkd.ravel()
    if density < 1.0:
        keep = rng.random(di.size) < density
        di, ti, val = di[keep], ti[keep], val[keep]
    return InteractionDataset(
        tuple((f"D{d:04d}", s) for d, s in enumerate(drugs)),
        tuple((f"T{t:04d}", s) for t, s in enumerate(targets)),
        di.astype(np.int64), ti.astype(np.int64), val.astype(np.float64),
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description="Write a synthetic Davis-shaped dataset directory.")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--drugs", type=int, default=68)
    ap.add_argument("--targets", type=int, default=442)
    ap.add_argument("--density", type=float, default=1.0)
    args = ap.parse_args(argv)
    ds = make_synthetic_dataset(args.drugs, args.targets, args.density, args.seed)
    save_dataset(ds, args.out_dir)
    print(f"wrote {args.out_dir}: {ds.summary()}", file=sys.stderr)


if __name__ == "__main__":
    main()
