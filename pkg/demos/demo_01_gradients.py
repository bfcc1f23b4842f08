"""
Checking LSTM gradients by finite differences
=============================================

The Q-network is an LSTM whose hidden vector goes through a softmax and a
dense layer. Backpropagation through time is written by hand, so we check
it numerically on a small 64-bit network.
"""

import numpy as np
from proapt.model import build_network
from proapt.numerics import grad_check, qnet_backward, qnet_forward

net = build_network(input_size=6, hidden_size=5, n_actions=3, seed=0, dtype=np.float64)
rng = np.random.default_rng(0)
seq = rng.normal(size=(4, 6))       # four time steps
dq = rng.normal(size=(4, 3))        # an arbitrary upstream gradient

q, cache = qnet_forward(net, seq)
print("Q-values per step:\n", q.round(4))

grads = qnet_backward(cache, dq)
for name, g in grads.items():
    print(f"{name:10s} shape {g.shape}  |g|max {np.abs(g).max():.3e}")

# central differences on every parameter
print("max relative error:", grad_check(net, seq, dq))

# a corrupted gradient is caught
grads["lstm.w_hh"][0, 0] += 1.0
print("after corrupting one entry:", grad_check(net, seq, dq, grads=grads))
