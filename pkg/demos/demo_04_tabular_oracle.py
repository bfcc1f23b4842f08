"""
Tabular Q-learning against value iteration
==========================================

A five-state chain where action 1 moves right and the last state is
terminal. One-step Q-learning converges to the same table value iteration
finds.
"""

import numpy as np
from proapt.agent import FiniteMDP, tabular_q_oracle

n = 5
next_state = np.array([[s, min(s + 1, n - 1)] for s in range(n)])
reward = np.zeros((n, 2))
reward[n - 2, 1] = 1.0
mdp = FiniteMDP(next_state, reward, terminal=frozenset({n - 1}), max_steps=50)

Q = tabular_q_oracle(mdp, alpha=0.5, discount=0.9, episodes=2000, seed=0, epsilon=0.5)
print(Q.round(4))

# value iteration by hand
V = np.zeros((n, 2))
for _ in range(200):
    best = V.max(axis=1)
    best[n - 1] = 0.0
    V = reward + 0.9 * best[next_state]
    V[n - 1] = 0.0
print("max |Q - V|:", np.abs(Q - V).max())
print("greedy policy:", Q.argmax(axis=1)[:-1], "vs", V.argmax(axis=1)[:-1])
