import numpy as np
import pytest

from deepdta.neural import Tensor, backward


def numeric_grad(f, arr, h=1e-5, probes=None):
    """Central differences of scalar ``f()`` w.r.t. entries of ``arr`` (in place)."""
    flat = arr.reshape(-1)
    positions = range(flat.size) if probes is None else probes
    out = {}
    for i in positions:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        out[i] = (up - down) / (2 * h)
    return out


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def check_grad(loss_fn, tensors, h=1e-5, tol=1e-4, max_probes=None, rng=None):
    """Compare backward() against central differences for every tensor given."""
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    backward(loss)
    for t in tensors:
        probes = None
        if max_probes is not None and t.size > max_probes:
            probes = (rng or np.random.default_rng(0)).choice(t.size, max_probes, replace=False)
        num = numeric_grad(lambda: float(loss_fn().data), t.data, h=h, probes=probes)
        analytic = t.grad.reshape(-1)
        for i, g in num.items():
            assert rel_err(analytic[i], g) < tol, (t.name, i, analytic[i], g)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def param(arr, name=None):
    return Tensor(np.array(arr, dtype=float), requires_grad=True, name=name)
