"""Differentiable kernels used by the affinity model.

All ops accept an optional leading batch axis.  Sequence tensors are laid out
as ``[..., length, channels]``.
"""

import numpy as np

from .tensor import DTYPE, Tensor, make_result


def embedding(indices, table):
    """Look up rows of ``table`` (``[vocab + 1, dim]``) for integer ``indices``."""
    idx = np.asarray(indices)
    _check_indices(idx, table.shape[0])
    out = table.data[idx]

    def backward_fn(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return make_result(out, (table,), backward_fn)


def gather_rows(x, rows):
    """Select ``x[rows]`` along the first axis; repeated rows accumulate gradient."""
    rows = np.asarray(rows, dtype=np.intp)
    out = x.data[rows]

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, rows, g)
        return (gx,)

    return make_result(out, (x,), backward_fn)


def conv1d(x, weight, bias=None, where="conv1d"):
    """Valid, stride-1 convolution.

    ``x`` is ``[..., L, C_in]``, ``weight`` is ``[F, C_in, k]`` and the result
    is ``[..., L - k + 1, F]`` with
    ``out[t, f] = bias[f] + sum_{c,j} x[t + j, c] * weight[f, c, j]``.

    Computed as a sum over the k filter taps, each a single 2-D matrix
    product on the flattened input.
    """
    n_filters, c_in, k = weight.shape
    length = x.shape[-2]
    if x.shape[-1] != c_in:
        raise ValueError(f"{where}: input has {x.shape[-1]} channels, weights expect {c_in}")
    if length < k:
        raise ValueError(f"{where}: input length {length} shorter than filter length {k}")
    out_len = length - k + 1
    lead = x.shape[:-2]
    x3 = x.data.reshape(-1, length, c_in)
    x2 = x3.reshape(-1, c_in)
    taps = [np.ascontiguousarray(weight.data[:, :, j]) for j in range(k)]
    out = np.zeros((x3.shape[0], out_len, n_filters))
    for j in range(k):
        out += (x2 @ taps[j].T).reshape(x3.shape[0], length, n_filters)[:, j:j + out_len]
    if bias is not None:
        out += bias.data
    out = out.reshape(*lead, out_len, n_filters)

    def backward_fn(g):
        g3 = g.reshape(-1, out_len, n_filters)
        g2 = g3.reshape(-1, n_filters)
        grads = []
        if x.requires_grad:
            gx = np.zeros_like(x3)
            for j in range(k):
                gx[:, j:j + out_len] += (g2 @ taps[j]).reshape(g3.shape[0], out_len, c_in)
            grads.append(gx.reshape(x.shape))
        else:
            grads.append(None)
        gw = np.empty_like(weight.data)
        if n_filters <= c_in:
            # shift the (narrower) gradient instead of copying input windows
            shifted = np.zeros((x3.shape[0], length, n_filters))
            for j in range(k):
                shifted[:, :j] = 0.0
                shifted[:, j:j + out_len] = g3
                shifted[:, j + out_len:] = 0.0
                gw[:, :, j] = shifted.reshape(-1, n_filters).T @ x2
        else:
            for j in range(k):
                xj = np.ascontiguousarray(x3[:, j:j + out_len]).reshape(-1, c_in)
                gw[:, :, j] = g2.T @ xj
        grads.append(gw)
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return make_result(out, (x, weight, bias), backward_fn)


def _check_indices(idx, n_rows):
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError(f"embedding indices must be integers, got {idx.dtype}")
    bad = np.argwhere((idx < 0) | (idx >= n_rows))
    if bad.size:
        pos = tuple(int(v) for v in bad[0])
        raise IndexError(
            f"embedding index {int(idx[pos])} at position {pos} outside [0, {n_rows - 1}]"
        )


def _scatter_rows(keys, values, n_rows):
    """``out[keys[i]] += values[i]`` for a short table (one bincount per column)."""
    out = np.empty((n_rows, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(keys, weights=values[:, c], minlength=n_rows)
    return out


def embedding_conv1d(indices, table, weight, bias=None, where="conv1d"):
    """``conv1d(embedding(indices, table), weight, bias)`` without the embedded tensor.

    Since the convolution is linear in each one-hot input position, tap ``j``
    reduces to a lookup in the projected table ``table @ weight[:, :, j].T``.
    """
    idx = np.asarray(indices)
    _check_indices(idx, table.shape[0])
    n_filters, c_in, k = weight.shape
    if table.shape[1] != c_in:
        raise ValueError(f"{where}: embedding width {table.shape[1]} != conv input channels {c_in}")
    length = idx.shape[-1]
    if length < k:
        raise ValueError(f"{where}: input length {length} shorter than filter length {k}")
    out_len = length - k + 1
    idx2 = idx.reshape(-1, length)
    proj = [table.data @ weight.data[:, :, j].T for j in range(k)]
    out = np.zeros((idx2.shape[0], out_len, n_filters))
    for j in range(k):
        out += proj[j][idx2[:, j:j + out_len]]
    if bias is not None:
        out += bias.data
    out = out.reshape(*idx.shape[:-1], out_len, n_filters)
    n_rows = table.shape[0]

    def backward_fn(g):
        g3 = g.reshape(-1, out_len, n_filters)
        gt = np.zeros_like(table.data)
        gw = np.empty_like(weight.data)
        for j in range(k):
            keys = idx2[:, j:j + out_len].ravel()
            # gradient w.r.t. the projected table for tap j
            gproj = _scatter_rows(keys, g3.reshape(-1, n_filters), n_rows)
            gt += gproj @ weight.data[:, :, j]
            gw[:, :, j] = gproj.T @ table.data
        grads = [gt, gw]
        if bias is not None:
            grads.append(g3.reshape(-1, n_filters).sum(axis=0))
        return tuple(grads)

    return make_result(out, (table, weight, bias), backward_fn)


def relu(x):
    mask = x.data > 0
    out = np.where(mask, x.data, 0.0)

    def backward_fn(g):
        return (g * mask,)

    return make_result(out, (x,), backward_fn)


def global_max_pool(x):
    """Max over the time axis of ``[..., L, C]``; ties route to the earliest step."""
    if x.shape[-2] < 1:
        raise ValueError("global_max_pool: empty time axis")
    arg = np.argmax(x.data, axis=-2)
    out = np.take_along_axis(x.data, arg[..., None, :], axis=-2)[..., 0, :]

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg[..., None, :], g[..., None, :], axis=-2)
        return (gx,)

    return make_result(out, (x,), backward_fn)


def dense(x, weight, bias=None):
    """``out = weight @ x + bias`` with ``weight`` shaped ``[out, in]``."""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(
            f"dense: input shape {x.shape} does not match weight shape {weight.shape}"
        )
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward_fn(g):
        g2 = g.reshape(-1, weight.shape[0])
        x2 = x.data.reshape(-1, weight.shape[1])
        grads = [g @ weight.data if x.requires_grad else None, g2.T @ x2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return make_result(out, (x, weight, bias), backward_fn)


def dropout(x, rate, training, rng=None):
    """Inverted dropout.  Identity when not training or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a seeded generator")
    keep = rng.random(x.shape) >= rate
    scale = keep / (1.0 - rate)
    out = x.data * scale

    def backward_fn(g):
        return (g * scale,)

    return make_result(out, (x,), backward_fn)


def concat(a, b):
    """Join along the last axis; both inputs must have the same rank."""
    if a.data.ndim != b.data.ndim:
        raise ValueError(f"concat: rank mismatch {a.shape} vs {b.shape}")
    m = a.shape[-1]
    out = np.concatenate([a.data, b.data], axis=-1)

    def backward_fn(g):
        return g[..., :m], g[..., m:]

    return make_result(out, (a, b), backward_fn)


def tensor_sum(x):
    def backward_fn(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(np.asarray(x.data.sum()), (x,), backward_fn)


def mse_loss(predictions, targets):
    """Mean squared error; ``targets`` may be a Tensor or an array."""
    y = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=DTYPE)
    if predictions.shape != y.shape:
        raise ValueError(f"mse_loss: shape mismatch {predictions.shape} vs {y.shape}")
    n = predictions.size
    if n == 0:
        raise ValueError("mse_loss: empty input")
    diff = predictions.data - y
    out = np.asarray(np.dot(diff.ravel(), diff.ravel()) / n)

    def backward_fn(g):
        return ((2.0 / n) * g * diff,)

    return make_result(out, (predictions,), backward_fn)
