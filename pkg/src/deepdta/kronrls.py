"""Kronecker regularised least squares.

With a target kernel ``Kt`` and a drug kernel ``Kd`` the pair kernel is
``Kd (x) Kt``.  For a complete ``targets x drugs`` label matrix ``Y`` the dual
coefficients solve ``Kt A Kd + lam A = Y``, which diagonalises under the
eigendecompositions ``Kt = U St U'`` and ``Kd = V Sd V'``:

    A = U [(U' Y V) / (St Sd' + lam)] V'

When only some pairs are labelled (cross-validation on a pair-level split)
the same objective restricted to observed pairs is solved with conjugate
gradients, using Kronecker matrix-vector products.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .metrics import concordance_index_fast

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = tuple(10.0 ** k for k in range(-5, 5))


class KronRlsError(ValueError):
    pass


def _kernel_values(k):
    return np.asarray(getattr(k, "values", k), dtype=np.float64)


def psd_kernel(k, name="kernel"):
    """Symmetrise and clip negative eigenvalues; returns (eigvals, eigvecs)."""
    k = _kernel_values(k)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise KronRlsError(f"{name} must be square, got shape {k.shape}")
    sym = 0.5 * (k + k.T)
    vals, vecs = np.linalg.eigh(sym)
    if not np.isfinite(vals).all():
        raise KronRlsError(f"{name} has non-finite eigenvalues")
    n_neg = int(np.count_nonzero(vals < 0))
    if n_neg:
        logger.info("%s: clipped %d negative eigenvalues (min %.3g)", name, n_neg, vals.min())
    return np.clip(vals, 0.0, None), vecs


@dataclass
class KronRlsModel:
    drug_kernel: np.ndarray      # clipped PSD version actually used
    target_kernel: np.ndarray
    lam: float
    dual_coefficients: np.ndarray  # targets x drugs

    def fitted_values(self):
        return self.target_kernel @ self.dual_coefficients @ self.drug_kernel


def _check_inputs(drug_kernel, target_kernel, y, lam):
    if not lam > 0:
        raise KronRlsError(f"lambda must be > 0, got {lam}")
    y = np.asarray(y, dtype=np.float64)
    kd, kt = _kernel_values(drug_kernel), _kernel_values(target_kernel)
    if y.ndim != 2 or y.shape != (kt.shape[0], kd.shape[0]):
        raise KronRlsError(
            f"affinity matrix shape {y.shape} does not match targets x drugs "
            f"({kt.shape[0]}, {kd.shape[0]})")
    return y


def fit(drug_kernel, target_kernel, affinity_matrix, lam):
    """Closed-form fit on a complete ``targets x drugs`` affinity matrix."""
    y = _check_inputs(drug_kernel, target_kernel, affinity_matrix, lam)
    if not np.isfinite(y).all():
        raise KronRlsError("affinity matrix has missing entries; use fit_observed")
    st, u = psd_kernel(target_kernel, "target kernel")
    sd, v = psd_kernel(drug_kernel, "drug kernel")
    divisor = np.outer(st, sd) + lam
    if not (divisor > 0).all():
        raise KronRlsError("non-positive divisor in eigen solve")
    a = u @ ((u.T @ y @ v) / divisor) @ v.T
    return KronRlsModel((v * sd) @ v.T, (u * st) @ u.T, float(lam), a)


def fit_observed(drug_kernel, target_kernel, affinity_matrix, lam, tol=1e-10, maxiter=2000):
    """Fit using only the finite entries of ``affinity_matrix``.

    Solves ``(K_obs + lam I) a = y_obs`` where ``K_obs`` is the Kronecker pair
    kernel restricted to observed pairs; unobserved pairs get zero dual weight.
    """
    y = _check_inputs(drug_kernel, target_kernel, affinity_matrix, lam)
    mask = np.isfinite(y)
    if mask.all():
        return fit(drug_kernel, target_kernel, y, lam)
    if not mask.any():
        raise KronRlsError("no observed affinities")
    st, u = psd_kernel(target_kernel, "target kernel")
    sd, v = psd_kernel(drug_kernel, "drug kernel")
    kt = (u * st) @ u.T
    kd = (v * sd) @ v.T
    rows, cols = np.nonzero(mask)
    n = rows.size

    def matvec(x):
        grid = np.zeros(y.shape)
        grid[rows, cols] = np.ravel(x)
        return (kt @ grid @ kd)[rows, cols] + lam * np.ravel(x)

    op = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    sol, info = cg(op, y[rows, cols], rtol=tol, atol=0.0, maxiter=maxiter)
    if info > 0:
        logger.warning("conjugate gradient stopped after %d iterations without reaching tol", info)
    a = np.zeros(y.shape)
    a[rows, cols] = sol
    return KronRlsModel(kd, kt, float(lam), a)


def predict(model, drug_sim_row, target_sim_row):
    """``target_row . A . drug_row`` for one query pair; rows may be stacked."""
    d = np.asarray(drug_sim_row, dtype=np.float64)
    t = np.asarray(target_sim_row, dtype=np.float64)
    n_t, n_d = model.dual_coefficients.shape
    if d.shape[-1] != n_d or t.shape[-1] != n_t:
        raise KronRlsError(
            f"similarity rows of length ({t.shape[-1]}, {d.shape[-1]}) do not match "
            f"training ({n_t} targets, {n_d} drugs)")
    if d.ndim == 1 and t.ndim == 1:
        return float(t @ model.dual_coefficients @ d)
    return np.einsum("nt,td,nd->n", np.atleast_2d(t), model.dual_coefficients, np.atleast_2d(d))


def predict_pairs(model, target_index, drug_index):
    """Predictions for training-entity pairs given by index arrays."""
    return model.fitted_values()[np.asarray(target_index), np.asarray(drug_index)]


def _training_matrix(dataset, indices):
    y = np.full((len(dataset.targets), len(dataset.drugs)), np.nan)
    y[dataset.target_index[indices], dataset.drug_index[indices]] = dataset.affinity[indices]
    return y


def evaluate_split(dataset, train_idx, eval_idx, drug_kernel, target_kernel, lam):
    """Fit on ``train_idx`` and return (predictions, actuals) on ``eval_idx``."""
    model = fit_observed(drug_kernel, target_kernel, _training_matrix(dataset, train_idx), lam)
    eval_idx = np.asarray(eval_idx, dtype=np.intp)
    pred = predict_pairs(model, dataset.target_index[eval_idx], dataset.drug_index[eval_idx])
    return pred, dataset.affinity[eval_idx]


def select_lambda(dataset, fold_plan, grid, drug_kernel, target_kernel):
    """Grid value with the best mean validation CI over the five folds.

    Ties go to the larger lambda.  Returns ``(best_lambda, table)`` where the
    table maps each lambda to its per-fold CI list.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise KronRlsError("empty lambda grid")
    if any(g <= 0 for g in grid):
        raise KronRlsError("lambda grid values must be positive")
    table = {}
    best, best_ci = None, -np.inf
    for lam in grid:
        scores = []
        for f in range(len(fold_plan.train_folds)):
            pred, act = evaluate_split(dataset, fold_plan.training_indices(exclude_fold=f),
                                       fold_plan.train_folds[f], drug_kernel, target_kernel, lam)
            scores.append(concordance_index_fast(pred, act))
            logger.info("lambda=%g fold=%d CI=%.5f", lam, f, scores[-1])
        table[lam] = scores
        mean = float(np.mean(scores))
        if mean >= best_ci:
            best, best_ci = lam, mean
    return best, table
