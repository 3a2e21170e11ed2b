"""The ``deepdta`` command.

Subcommands: split, sim, kronrls, train, search, evaluate, predict, ci and
version.  Structured outputs are JSON and tabular inputs TSV.  Every output
file is written to a temporary name and renamed into place.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from contextlib import contextmanager
from importlib import resources

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from ._io import atomic_open, write_json
from .dataio import (
    DataError,
    load_dataset,
    load_fold_plan,
    make_fold_plan,
    read_entities,
    save_fold_plan,
)
from .encoding import EncodingError, VocabularyKind, encode_many, load_vocabulary
from .kronrls import DEFAULT_LAMBDA_GRID, KronRlsError, evaluate_split, select_lambda
from .metrics import FoldScores, MetricError, concordance_index_fast, mse
from .model import ConfigError, ModelConfig, Variant, load_model, save_model
from .neural.checkpoint import CheckpointError
from .similarity import (
    SimilarityError,
    build_similarity_matrix,
    export_similarity_matrix,
    import_similarity_matrix,
)
from .train import (
    SearchSpace,
    TrainingError,
    evaluate_model,
    final_evaluation,
    grid_search,
    metrics_document,
    prepare_inputs,
    stderr_progress,
    train_one,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_ENV = "DTA_DATA_DIR"

logger = logging.getLogger("deepdta")


class UsageError(Exception):
    pass


class DataFault(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextmanager
def _source(label):
    """Attribute data errors raised inside the block to a flag or file."""
    try:
        yield
    except (DataError, EncodingError, SimilarityError, CheckpointError, ConfigError,
            KronRlsError, json.JSONDecodeError, KeyError, TypeError, ValueError, OSError) as exc:
        if isinstance(exc, OSError) and exc.filename:
            raise DataFault(f"{label}: {exc.strerror}: {exc.filename}") from None
        raise DataFault(f"{label}: {exc}") from None


def _data_dir(args):
    path = args.data or os.environ.get(DATA_ENV)
    if not path:
        raise UsageError(f"--data is required (or set {DATA_ENV})")
    return path


def _load_data(args):
    path = _data_dir(args)
    with _source(f"--data {path}"):
        return load_dataset(path)


def _load_plan(args, dataset):
    with _source(f"--folds {args.folds}"):
        return load_fold_plan(args.folds, len(dataset))


def _load_sim(flag, path, ids):
    if path is None:
        return None
    with _source(f"{flag} {path}"):
        return import_similarity_matrix(path).reorder(ids)


def _fill_sim_dims(raw, dataset):
    """Missing or zero similarity widths default to the dataset's entity counts."""
    variant = Variant(raw.get("variant", Variant.CNN_CNN.value))
    if not variant.compound_cnn and not raw.get("drug_sim_dim"):
        raw["drug_sim_dim"] = len(dataset.drugs)
    if not variant.protein_cnn and not raw.get("target_sim_dim"):
        raw["target_sim_dim"] = len(dataset.targets)
    return raw


def _model_inputs(args, dataset, config):
    drug_sim = _load_sim("--drug-sim", getattr(args, "drug_sim", None), dataset.drug_ids)
    target_sim = _load_sim("--protein-sim", getattr(args, "protein_sim", None),
                           dataset.target_ids)
    with _source("--data"):
        try:
            return prepare_inputs(dataset, config, drug_sim, target_sim)
        except TrainingError as exc:
            raise UsageError(f"{exc} (pass --drug-sim / --protein-sim)") from None


def _load_training_config(args, dataset):
    with _source(f"--config {args.config}"):
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if args.seed is not None:
            raw["seed"] = args.seed
        return ModelConfig.from_dict(_fill_sim_dims(raw, dataset))


def _emit_json(obj, path):
    if path:
        write_json(path, obj)
    else:
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")


# --- subcommands ---------------------------------------------------------------

def cmd_split(args):
    dataset = _load_data(args)
    with _source("--data"):
        plan = make_fold_plan(dataset, args.seed)
    save_fold_plan(plan, args.out)
    print(f"wrote {args.out}: part sizes {[len(p) for p in plan.parts]}", file=sys.stderr)


def cmd_sim(args):
    if args.proteins:
        flag, path, kind = "--proteins", args.proteins, "target"
    else:
        flag, path, kind = "--ligands", args.ligands, "drug"
    measure = args.measure or ("sw" if args.proteins else "tanimoto")
    with _source(f"{flag} {path}"):
        entities, _ = read_entities(path, kind)
        matrix = build_similarity_matrix(entities, measure, jobs=args.jobs)
    export_similarity_matrix(matrix, args.out)


def _parse_grid(text):
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--lambda-grid: cannot parse {text!r} as comma-separated numbers") from None
    if not grid or min(grid) <= 0:
        raise UsageError("--lambda-grid needs at least one positive value")
    return grid


def cmd_kronrls(args):
    grid = _parse_grid(args.lambda_grid) if args.lambda_grid else list(DEFAULT_LAMBDA_GRID)
    dataset = _load_data(args)
    plan = _load_plan(args, dataset)
    kd = _load_sim("--drug-sim", args.drug_sim, dataset.drug_ids)
    kt = _load_sim("--protein-sim", args.protein_sim, dataset.target_ids)
    best, table = select_lambda(dataset, plan, grid, kd, kt)
    test = np.asarray(plan.test_indices)
    cis, errs = [], []
    for f in range(len(plan.train_folds)):
        pred, act = evaluate_split(dataset, plan.training_indices(exclude_fold=f), test, kd, kt,
                                   best)
        cis.append(concordance_index_fast(pred, act))
        errs.append(mse(pred, act))
    doc = {"ci": FoldScores.from_values(cis).to_dict(),
           "mse": FoldScores.from_values(errs).to_dict(),
           "lambda": best,
           "cv_ci": {repr(lam): scores for lam, scores in table.items()}}
    _emit_json(doc, args.out)


def cmd_train(args):
    dataset = _load_data(args)
    plan = _load_plan(args, dataset)
    config = _load_training_config(args, dataset)
    inputs = _model_inputs(args, dataset, config)
    run = train_one(dataset, plan.training_indices(), config, inputs=inputs,
                    progress=None if args.quiet else stderr_progress)
    save_model(run.final_model, args.out_model)
    ci, err = evaluate_model(run.final_model, dataset, plan.test_indices, inputs)
    doc = metrics_document(FoldScores.from_values([ci]), FoldScores.from_values([err]), config)
    _emit_json(doc, args.metrics_out)


def cmd_search(args):
    dataset = _load_data(args)
    plan = _load_plan(args, dataset)
    config = _load_training_config(args, dataset)
    with _source(f"--space {args.space}"):
        with open(args.space, encoding="utf-8") as fh:
            space = SearchSpace.from_dict(json.load(fh))
    inputs = _model_inputs(args, dataset, config)
    result = grid_search(dataset, plan, space, config, inputs=inputs, jobs=args.jobs,
                         table_path=args.table_out)
    best = result.best_config
    if args.best_config_out:
        with atomic_open(args.best_config_out) as fh:
            fh.write(best.to_json())
    final = final_evaluation(dataset, plan, best, inputs=inputs, jobs=args.jobs,
                             progress=None if args.quiet else stderr_progress)
    _emit_json(metrics_document(final.ci, final.mse, best), args.metrics_out)


def cmd_evaluate(args):
    with _source(f"--model {args.model}"):
        model = load_model(args.model)
    dataset = _load_data(args)
    plan = _load_plan(args, dataset)
    inputs = _model_inputs(args, dataset, model.config)
    ci, err = evaluate_model(model, dataset, plan.test_indices, inputs)
    doc = metrics_document(FoldScores.from_values([ci]), FoldScores.from_values([err]),
                           model.config)
    _emit_json(doc, args.metrics_out)


def _read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'SMILES<TAB>protein_sequence'")
            pairs.append((parts[0], parts[1]))
    if not pairs:
        raise DataError(f"{path}: no input pairs")
    return pairs


def cmd_predict(args):
    if args.batch is None and (args.smiles is None or args.protein is None):
        raise UsageError("give --smiles and --protein, or --batch FILE")
    if args.batch is not None and (args.smiles or args.protein):
        raise UsageError("--batch cannot be combined with --smiles/--protein")
    with _source(f"--model {args.model}"):
        model = load_model(args.model)
    cfg = model.config
    if not (cfg.kind.compound_cnn and cfg.kind.protein_cnn):
        raise DataFault(f"--model {args.model}: predict needs a CnnCnn model, got {cfg.variant}")
    if args.batch is not None:
        with _source(f"--batch {args.batch}"):
            pairs = _read_pairs(args.batch)
    else:
        pairs = [(args.smiles, args.protein)]
    label = f"--batch {args.batch}" if args.batch else "--smiles/--protein"
    with _source(label):
        c = encode_many([s for s, _ in pairs], load_vocabulary(VocabularyKind.SMILES),
                        cfg.smiles_max_len)
        p = encode_many([t for _, t in pairs], load_vocabulary(VocabularyKind.PROTEIN),
                        cfg.protein_max_len)
    preds = model.predict(c, p)
    text = "".join(f"{v!r}\n" for v in preds.tolist())
    if args.out:
        with atomic_open(args.out) as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_floats(flag, path):
    values = []
    with _source(f"{flag} {path}"):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    values.append(float(line))
                except ValueError:
                    raise DataError(f"line {lineno}: {line.strip()!r} is not a number") from None
    return np.array(values)


def cmd_ci(args):
    pred = _read_floats("--pred", args.pred)
    actual = _read_floats("--actual", args.actual)
    if pred.size != actual.size:
        raise DataFault(f"--pred has {pred.size} values but --actual has {actual.size}")
    if pred.size == 0:
        raise DataFault(f"--pred {args.pred}: no values")
    if not (np.isfinite(pred).all() and np.isfinite(actual).all()):
        raise DataFault("--pred/--actual contain non-finite values")
    _emit_json({"ci": concordance_index_fast(pred, actual), "mse": mse(pred, actual)}, None)


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


def data_file(name):
    return resources.files("deepdta.data").joinpath(name)


def provenance():
    """Version and content hashes of the files that pin a run's behaviour."""
    files = {
        "vocabularies": ["smiles_vocab.tsv", "protein_vocab.tsv"],
        "default_configs": ["config_davis.json", "config_kiba.json", "search_space.json"],
        "substitution_table": ["blosum62.txt"],
    }
    doc = {"tool": "deepdta", "version": __version__}
    for group, names in files.items():
        doc[group] = {n: _sha256(data_file(n).read_bytes()) for n in names}
    return doc


def cmd_version(args):
    _emit_json(provenance(), None)


# --- parser --------------------------------------------------------------------

def _add_common(p, data=True, folds=True, seed=False, jobs=True):
    if data:
        p.add_argument("--data", metavar="DIR",
                       help=f"dataset directory (default: ${DATA_ENV})")
    if folds:
        p.add_argument("--folds", metavar="FILE", required=True, help="fold plan JSON")
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help="overrides the config seed (whose default is 0)")
    if jobs:
        p.add_argument("--jobs", type=_positive_int, default=1,
                       help="parallel workers; 1 (default) is fully deterministic")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _add_sim_inputs(p):
    p.add_argument("--drug-sim", metavar="FILE", help="drug similarity TSV (Sim compound branch)")
    p.add_argument("--protein-sim", metavar="FILE",
                   help="protein similarity TSV (Sim protein branch)")


def build_parser():
    parser = _Parser(prog="deepdta", allow_abbrev=False,
                     description="Binding affinity prediction: data splits, similarity "
                                 "matrices, KronRLS, CNN training and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("split", allow_abbrev=False, help="write a six-part fold plan")
    _add_common(p, folds=False, jobs=False)
    p.add_argument("--seed", type=int, default=0, help="shuffle seed (default 0)")
    p.add_argument("--out", metavar="FILE", required=True, help="fold plan JSON to write")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("sim", allow_abbrev=False, help="pairwise similarity matrix")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--proteins", metavar="FILE", help="target_id<TAB>sequence file")
    src.add_argument("--ligands", metavar="FILE", help="drug_id<TAB>SMILES file")
    p.add_argument("--measure", choices=["sw", "tanimoto"],
                   help="sw (proteins default) or tanimoto (ligands default)")
    p.add_argument("--out", metavar="FILE", required=True, help="similarity TSV to write")
    _add_common(p, data=False, folds=False)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("kronrls", allow_abbrev=False, help="KronRLS baseline")
    _add_common(p, jobs=False)
    p.add_argument("--protein-sim", metavar="FILE", required=True)
    p.add_argument("--drug-sim", metavar="FILE", required=True)
    p.add_argument("--lambda-grid", metavar="CSV",
                   help="comma-separated lambdas (default 1e-5,...,1e4)")
    p.add_argument("--out", metavar="FILE", help="metrics JSON (default: stdout)")
    p.set_defaults(func=cmd_kronrls)

    p = sub.add_parser("train", allow_abbrev=False,
                       help="train on the CV folds, score the test part")
    _add_common(p, seed=True)
    p.add_argument("--config", metavar="FILE", required=True, help="model config JSON")
    p.add_argument("--out-model", metavar="FILE", required=True, help="checkpoint to write")
    p.add_argument("--metrics-out", metavar="FILE", help="metrics JSON (default: stdout)")
    p.add_argument("--quiet", action="store_true", help="no per-epoch progress lines")
    _add_sim_inputs(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("search", allow_abbrev=False,
                       help="grid search by CV, then five-run test evaluation")
    _add_common(p, seed=True)
    p.add_argument("--config", metavar="FILE", required=True, help="base model config JSON")
    p.add_argument("--space", metavar="FILE", required=True, help="search space JSON")
    p.add_argument("--metrics-out", metavar="FILE", help="metrics JSON (default: stdout)")
    p.add_argument("--table-out", metavar="FILE", help="per-combination CV table JSON")
    p.add_argument("--best-config-out", metavar="FILE", help="winning config JSON")
    p.add_argument("--quiet", action="store_true", help="no per-epoch progress lines")
    _add_sim_inputs(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", allow_abbrev=False, help="score a checkpoint on the test part")
    p.add_argument("--model", metavar="FILE", required=True)
    _add_common(p)
    p.add_argument("--metrics-out", metavar="FILE", help="metrics JSON (default: stdout)")
    _add_sim_inputs(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", allow_abbrev=False, help="affinity for new pairs")
    p.add_argument("--model", metavar="FILE", required=True)
    p.add_argument("--smiles", metavar="TEXT")
    p.add_argument("--protein", metavar="TEXT")
    p.add_argument("--batch", metavar="FILE", help="SMILES<TAB>sequence per line")
    p.add_argument("--out", metavar="FILE", help="write predictions here (default: stdout)")
    _add_common(p, data=False, folds=False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ci", allow_abbrev=False, help="CI and MSE of two value files")
    p.add_argument("--pred", metavar="FILE", required=True, help="one prediction per line")
    p.add_argument("--actual", metavar="FILE", required=True, help="one true value per line")
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser("version", allow_abbrev=False, help="version and data file hashes")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    jobs = getattr(args, "jobs", 1)
    try:
        with threadpool_limits(limits=jobs):
            args.func(args)
    except UsageError as exc:
        print(f"deepdta {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataFault as exc:
        print(f"deepdta {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, MetricError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"deepdta {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, EncodingError, SimilarityError, CheckpointError, ConfigError,
            KronRlsError) as exc:
        print(f"deepdta {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"deepdta {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
