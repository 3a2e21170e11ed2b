"""
The tensor engine and its layers
================================

The model runs on a small reverse-mode autodiff engine.  Here we build a
tiny conv-pool-dense network by hand, check one gradient against finite
differences and take a few Adam steps.
"""

import numpy as np

from deepdta.neural import (AdamState, Tensor, adam_step, backward, conv1d, conv1d_params,
                            dense, dense_params, embedding, embedding_params, global_max_pool,
                            mse_loss, relu)

rng = np.random.default_rng(0)

# %%
# Parameters are plain tensors with Glorot-uniform initial values.
table = embedding_params(10, 4, rng, name="emb").weights
conv = conv1d_params(4, 6, 3, rng, name="conv")
head = dense_params(6, 1, rng, name="head")
params = [("emb", table), ("conv.weights", conv.weights), ("conv.bias", conv.bias),
          ("head.weights", head.weights), ("head.bias", head.bias)]

tokens = rng.integers(1, 11, (8, 12))
target = rng.normal(size=(8, 1))


def loss_fn():
    h = relu(conv1d(embedding(tokens, table), conv.weights, conv.bias))
    return mse_loss(dense(global_max_pool(h), head.weights, head.bias), target)


# %%
# One backward pass fills ``.grad`` on every parameter.  A central difference
# on a single weight should agree to many digits.
loss = loss_fn()
backward(loss)
w = conv.weights.data.reshape(-1)
old, h = w[5], 1e-5
w[5] = old + h
up = float(loss_fn().data)
w[5] = old - h
down = float(loss_fn().data)
w[5] = old
print("analytic %.8f  numeric %.8f" % (conv.weights.grad.reshape(-1)[5], (up - down) / (2 * h)))

# %%
# Adam updates the parameters in place.  The loss on this random problem
# drops quickly.
state = AdamState(learning_rate=0.01)
for step in range(200):
    for _, p in params:
        p.grad = None
    loss = loss_fn()
    backward(loss)
    adam_step(params, state)
    if step % 50 == 0:
        print(step, float(loss.data))
print("final", float(loss_fn().data))
