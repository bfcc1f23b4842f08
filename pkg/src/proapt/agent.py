"""Deep Q-learning agent that learns to predict the next attack step.

The environment is a time-ordered table of encoded states and their
next-step labels. At every record the agent picks an action (a class
index) epsilon-greedily, earns 1 when it matches the label and 0
otherwise, stores the transition in replay memory, and runs one learning
step on a time-sorted batch sampled from memory.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from proapt.config import RunConfig
from proapt.model import NetworkPair, QNetwork, build_network
from proapt.numerics import AdamState, adam_step, mse_loss, qnet_backward

log = logging.getLogger(__name__)


@dataclass
class Experience:
    state: np.ndarray
    action: int
    next_state: np.ndarray
    reward: int
    done: bool
    time_key: float


@dataclass
class Batch:
    """Struct-of-arrays view of sampled experiences, ascending in time."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    time_keys: np.ndarray
    order: np.ndarray  # insertion counter of each experience

    def __len__(self) -> int:
        return self.actions.shape[0]

    @classmethod
    def from_experiences(cls, exps) -> "Batch":
        return cls(
            np.stack([e.state for e in exps]),
            np.array([e.action for e in exps], dtype=int),
            np.stack([e.next_state for e in exps]),
            np.array([e.reward for e in exps], dtype=float),
            np.array([e.done for e in exps], dtype=bool),
            np.array([e.time_key for e in exps], dtype=float),
            np.arange(len(exps)),
        )

    def experiences(self) -> list[Experience]:
        return [
            Experience(self.states[i], int(self.actions[i]), self.next_states[i],
                       int(self.rewards[i]), bool(self.dones[i]), float(self.time_keys[i]))
            for i in range(len(self))
        ]


class ReplayMemory:
    """Fixed-capacity FIFO ring buffer of experiences."""

    def __init__(self, capacity: int, state_dim: int, dtype=np.float32):
        if capacity < 1:
            raise ValueError("replay memory capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim), dtype)
        self.next_states = np.zeros((capacity, state_dim), dtype)
        self.actions = np.zeros(capacity, int)
        self.rewards = np.zeros(capacity, float)
        self.dones = np.zeros(capacity, bool)
        self.time_keys = np.zeros(capacity, float)
        self.counter = np.zeros(capacity, np.int64)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def push(self, state, action, next_state, reward, done, time_key) -> None:
        slot = self.inserted % self.capacity
        self.states[slot] = state
        self.next_states[slot] = next_state
        self.actions[slot] = action
        self.rewards[slot] = reward
        self.dones[slot] = done
        self.time_keys[slot] = time_key
        self.counter[slot] = self.inserted
        self.inserted += 1

    def contents(self) -> Batch:
        """Every stored experience, oldest first."""
        if self.inserted <= self.capacity:
            idx = np.arange(self.inserted)
        else:
            start = self.inserted % self.capacity
            idx = (start + np.arange(self.capacity)) % self.capacity
        return self._gather(idx)

    def _gather(self, idx) -> Batch:
        return Batch(self.states[idx], self.actions[idx], self.next_states[idx],
                     self.rewards[idx], self.dones[idx], self.time_keys[idx], self.counter[idx])


def remember(mem: ReplayMemory, exp: Experience) -> ReplayMemory:
    mem.push(exp.state, exp.action, exp.next_state, exp.reward, exp.done, exp.time_key)
    return mem


def sample_batch(mem: ReplayMemory, batch_size: int, rng: np.random.Generator) -> Batch:
    """Uniform sample without replacement, sorted by (time, insertion order)."""
    n = len(mem)
    if n < batch_size:
        raise ValueError(f"replay memory holds {n} experiences, batch needs {batch_size}")
    idx = rng.choice(n, size=batch_size, replace=False)
    idx = idx[np.lexsort((mem.counter[idx], mem.time_keys[idx]))]
    return mem._gather(idx)


@dataclass
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.1
    decrement: float = 1e-3
    current: float | None = None

    def __post_init__(self):
        if self.current is None:
            self.current = self.start
        if not 0.0 <= self.end <= self.current <= self.start <= 1.0:
            raise ValueError("need 0 <= end <= current <= start <= 1")


def decay_epsilon(s: EpsilonSchedule) -> EpsilonSchedule:
    if s.current > s.end:
        s.current = max(s.current - s.decrement, s.end)
    return s


def select_action(q, schedule: EpsilonSchedule, rng: np.random.Generator) -> int:
    """Random action when a uniform draw from [0, 1) is <= epsilon, else argmax."""
    q = np.asarray(q)
    if q.size == 0:
        raise ValueError("cannot select an action from an empty Q-vector")
    if rng.random() <= schedule.current:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def compute_reward(predicted: int, actual: int) -> int:
    return int(predicted == actual)


def compute_q_ref(batch: Batch, target_net: QNetwork, discount: float) -> np.ndarray:
    """``r + discount * max_a target(next_state)``, or ``r`` for terminal steps.

    The batch's next states run through the target network as one sequence.
    """
    q_next, _ = target_net.forward(batch.next_states)
    bootstrap = q_next.max(axis=1).astype(float)
    return np.where(batch.dones, batch.rewards, batch.rewards + discount * bootstrap)


def learn_step(pair: NetworkPair, batch: Batch, discount: float, lr: float,
               adam: AdamState) -> float:
    """One gradient step on the main network. Returns the batch loss."""
    q, cache = pair.main.forward(batch.states)
    q_ref = compute_q_ref(batch, pair.target, discount)
    rows = np.arange(len(batch))
    loss, dqt = mse_loss(q[rows, batch.actions], q_ref)
    dq = np.zeros_like(q)
    dq[rows, batch.actions] = dqt
    adam_step(pair.main.parameters(), qnet_backward(cache, dq), adam, lr)
    pair.tick()
    return loss


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    mean_reward: float
    epsilon: float
    learn_steps: int

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "mean_loss": self.mean_loss,
                "mean_reward": self.mean_reward, "epsilon": self.epsilon,
                "learn_steps": self.learn_steps}


@dataclass
class TrainResult:
    pair: NetworkPair
    epochs: list[EpochStats] = field(default_factory=list)
    config: RunConfig | None = None


def new_pair(input_size: int, n_actions: int, config: RunConfig) -> NetworkPair:
    net = build_network(input_size, config.hidden_size, n_actions, config.seed_init,
                        np.dtype(config.dtype), config.softmax_position)
    return NetworkPair.from_network(net, config.sync_period)


def train(states, targets, time_keys, config: RunConfig, n_actions: int,
          pair: NetworkPair | None = None, on_epoch=None) -> TrainResult:
    """Walk the time-sorted training records for ``config.epochs`` epochs.

    ``targets`` are next-step class indices. ``on_epoch`` is called with each
    :class:`EpochStats` as it completes.
    """
    states = np.asarray(states)
    n = states.shape[0]
    if n == 0:
        raise ValueError("empty training split")
    cfg = config.resolve(n)
    dtype = np.dtype(cfg.dtype)
    states = states.astype(dtype)
    targets = np.asarray(targets, dtype=int)
    time_keys = np.asarray(time_keys, dtype=float)
    if pair is None:
        pair = new_pair(states.shape[1], n_actions, cfg)
    rng = np.random.default_rng(cfg.seed_agent)
    mem = ReplayMemory(cfg.memory_capacity, states.shape[1], dtype)
    eps = EpsilonSchedule(cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_decrement)
    adam = AdamState.zeros_like(pair.main.parameters())
    result = TrainResult(pair, [], cfg)
    main = pair.main
    for epoch in range(cfg.epochs):
        h = c = None
        losses = []
        rewards = 0
        for i in range(n):
            q, cache = main.forward(states[i:i + 1], h, c)
            h, c = cache.h, cache.c
            action = select_action(q[0], eps, rng)
            reward = compute_reward(action, targets[i])
            rewards += reward
            done = i == n - 1
            nxt = states[i] if done else states[i + 1]
            mem.push(states[i], action, nxt, reward, done, time_keys[i])
            if len(mem) >= cfg.batch_size:
                batch = sample_batch(mem, cfg.batch_size, rng)
                losses.append(learn_step(pair, batch, cfg.discount, cfg.learning_rate, adam))
            decay_epsilon(eps)
        stats = EpochStats(epoch, float(np.mean(losses)) if losses else float("nan"),
                           rewards / n, float(eps.current), len(losses))
        result.epochs.append(stats)
        log.info("epoch %d loss %.5f reward %.4f eps %.4f", epoch, stats.mean_loss,
                 stats.mean_reward, stats.epsilon)
        if on_epoch is not None:
            on_epoch(stats)
    return result


def predict(net: QNetwork, state, hidden=None):
    """Greedy prediction for one state. Returns ``(index, q, hidden')``."""
    h, c = (None, None) if hidden is None else hidden
    q, cache = net.forward(np.asarray(state)[None, :], h, c)
    return int(np.argmax(q[0])), q[0], (cache.h, cache.c)


def predict_sequence(net: QNetwork, states) -> tuple[np.ndarray, np.ndarray]:
    """Greedy predictions over time-ordered states with the hidden state
    carried from one record to the next. Returns ``(indices, Q)``."""
    q, _ = net.forward(np.asarray(states, dtype=net.dtype))
    return q.argmax(axis=1), q


# --------------------------------------------------------------------------
# tabular oracle


@dataclass
class FiniteMDP:
    """Deterministic finite MDP: ``next_state[s, a]`` and ``reward[s, a]``."""

    next_state: np.ndarray
    reward: np.ndarray
    terminal: frozenset = frozenset()
    max_steps: int = 100

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next_state.shape[1]


def tabular_q_oracle(mdp: FiniteMDP, alpha: float, discount: float, episodes: int,
                     seed: int, epsilon: float = 0.2) -> np.ndarray:
    """Classic one-step Q-learning with an epsilon-greedy behaviour policy.

    Episodes start from a uniformly chosen non-terminal state. Terminal
    states keep their initial (zero) values.
    """
    rng = np.random.default_rng(seed)
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    starts = [s for s in range(mdp.n_states) if s not in mdp.terminal]
    for _ in range(episodes):
        s = starts[int(rng.integers(len(starts)))]
        for _ in range(mdp.max_steps):
            if rng.random() <= epsilon:
                a = int(rng.integers(mdp.n_actions))
            else:
                a = int(np.argmax(Q[s]))
            s2 = int(mdp.next_state[s, a])
            r = float(mdp.reward[s, a])
            Q[s, a] += alpha * (r + discount * Q[s2].max() - Q[s, a])
            s = s2
            if s in mdp.terminal:
                break
    return Q
