import numpy as np
import pytest

from oracles import value_iteration
from proapt.agent import (
    Batch,
    EpsilonSchedule,
    Experience,
    FiniteMDP,
    ReplayMemory,
    compute_q_ref,
    compute_reward,
    decay_epsilon,
    learn_step,
    predict,
    predict_sequence,
    remember,
    sample_batch,
    select_action,
    tabular_q_oracle,
    train,
)
from proapt.config import RunConfig
from proapt.dataset import generate_synthetic_apt, preprocess_records, synthetic_schema
from proapt.model import NetworkPair, build_network
from proapt.numerics import AdamState, qnet_forward
from proapt.pipeline import prepare_fold


def exp(i, dim=2, t=None, reward=0, done=False):
    return Experience(np.full(dim, float(i)), 0, np.full(dim, float(i + 1)), reward, done,
                      float(i if t is None else t))


# -- replay memory ----------------------------------------------------------

def test_fifo_eviction():
    mem = ReplayMemory(2, 2)
    for i in (1, 2, 3):
        remember(mem, exp(i))
    assert mem.contents().states[:, 0].tolist() == [2.0, 3.0]


def test_capacity_never_exceeded():
    rng = np.random.default_rng(0)
    mem = ReplayMemory(37, 1)
    for i in range(100_000):
        mem.push([i], 0, [i], 0, False, rng.random())
        assert len(mem) <= 37
    kept = mem.contents().states[:, 0]
    assert kept.tolist() == list(range(100_000 - 37, 100_000))


def test_sample_whole_memory_is_time_sorted():
    mem = ReplayMemory(10, 1)
    times = [5, 3, 9, 3, 1]
    for i, t in enumerate(times):
        remember(mem, exp(i, dim=1, t=t))
    b = sample_batch(mem, 5, np.random.default_rng(0))
    assert b.time_keys.tolist() == [1, 3, 3, 5, 9]
    assert b.order.tolist() == [4, 1, 3, 0, 2]  # time ties broken by insertion


def test_sample_needs_enough_memory():
    mem = ReplayMemory(10, 1)
    remember(mem, exp(0, dim=1))
    with pytest.raises(ValueError):
        sample_batch(mem, 2, np.random.default_rng(0))


def test_sample_inclusion_frequency():
    mem = ReplayMemory(100, 1)
    for i in range(100):
        remember(mem, exp(i, dim=1, t=np.random.default_rng(i).random()))
    rng = np.random.default_rng(7)
    draws, b = 10_000, 16
    hits = np.zeros(100)
    for _ in range(draws):
        batch = sample_batch(mem, b, rng)
        assert np.all(np.diff(batch.time_keys) >= 0)
        hits[batch.order] += 1
    p = b / 100
    sigma = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(hits - draws * p) <= 3 * sigma)


def test_batch_round_trips_experiences():
    es = [exp(i, reward=i % 2, done=i == 2) for i in range(3)]
    back = Batch.from_experiences(es).experiences()
    assert [(e.reward, e.done, e.time_key) for e in back] == [(0, False, 0.0), (1, False, 1.0), (0, True, 2.0)]


# -- epsilon-greedy ---------------------------------------------------------

def test_greedy_when_epsilon_zero():
    rng = np.random.default_rng(0)
    s = EpsilonSchedule(0.0, 0.0, 0.1)
    q = np.array([0.2, 0.7, -1.0])
    assert all(select_action(q, s, rng) == 1 for _ in range(100))
    assert select_action(q + 100, s, rng) == 1


def test_tie_break_lowest_index():
    s = EpsilonSchedule(0.0, 0.0, 0.1)
    assert select_action([0.1, 0.9, 0.9], s, np.random.default_rng(0)) == 1


def test_uniform_when_epsilon_one():
    rng = np.random.default_rng(3)
    s = EpsilonSchedule(1.0, 1.0, 0.1)
    n, k = 10_000, 5
    counts = np.bincount([select_action(np.arange(k), s, rng) for _ in range(n)], minlength=k)
    sigma = np.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) <= 3 * sigma)


def test_select_empty_q():
    with pytest.raises(ValueError):
        select_action([], EpsilonSchedule(), np.random.default_rng(0))


@pytest.mark.parametrize("cur,dec,end,want", [(0.5, 0.1, 0.1, 0.4), (0.1, 0.1, 0.1, 0.1),
                                              (0.15, 0.1, 0.1, 0.1)])
def test_decay(cur, dec, end, want):
    s = decay_epsilon(EpsilonSchedule(1.0, end, dec, cur))
    assert s.current == pytest.approx(want)


def test_decay_reaches_end_after_expected_steps():
    s = EpsilonSchedule(1.0, 0.1, 0.07)
    trace = [s.current]
    while s.current > s.end:
        decay_epsilon(s)
        trace.append(s.current)
    assert len(trace) - 1 == int(np.ceil((1.0 - 0.1) / 0.07))
    assert all(a >= b >= 0.1 for a, b in zip(trace, trace[1:]))


def test_schedule_invariant():
    with pytest.raises(ValueError):
        EpsilonSchedule(0.5, 0.6, 0.1)


# -- rewards and targets ----------------------------------------------------

def test_reward():
    assert compute_reward(3, 3) == 1 and compute_reward(3, 4) == 0


class ConstTarget:
    """Target net stand-in with a fixed max Q of ``value``."""

    def __init__(self, value):
        self.value = value

    def forward(self, seq):
        return np.column_stack([np.full(len(seq), self.value), np.zeros(len(seq))]), None


def test_q_ref_arithmetic():
    b = Batch.from_experiences([exp(0, reward=1)])
    assert compute_q_ref(b, ConstTarget(0.8), 0.5).tolist() == [1.4]


def test_q_ref_discount_zero_is_reward():
    b = Batch.from_experiences([exp(i, reward=i % 2) for i in range(6)])
    net = build_network(2, 3, 2, 0, np.float64)
    assert compute_q_ref(b, net, 0.0).tolist() == b.rewards.tolist()


def test_q_ref_done_ignores_next_state():
    e = exp(0, reward=1, done=True)
    net = build_network(2, 3, 2, 0, np.float64)
    a = compute_q_ref(Batch.from_experiences([e]), net, 0.9)
    e.next_state = e.next_state + 100
    assert compute_q_ref(Batch.from_experiences([e]), net, 0.9).tolist() == a.tolist() == [1.0]


# -- learning ---------------------------------------------------------------

def _pair(seed=0, n_in=2, hidden=4, n_act=2, sync=1000):
    return NetworkPair.from_network(build_network(n_in, hidden, n_act, seed, np.float64), sync)


def test_zero_loss_leaves_parameters():
    pair = _pair()
    e = exp(0)
    q, _ = qnet_forward(pair.main, e.state[None, :])
    e.action, e.reward = 0, float(q[0, 0])
    before = pair.main.checksum()
    loss = learn_step(pair, Batch.from_experiences([e]), 0.0, 1e-2,
                      AdamState.zeros_like(pair.main.parameters()))
    assert loss == 0.0 and pair.main.checksum() == before


def test_single_experience_loss():
    pair = _pair(1)
    e = exp(3, reward=1)
    e.action = 1
    q, _ = qnet_forward(pair.main, e.state[None, :])
    q_ref = compute_q_ref(Batch.from_experiences([e]), pair.target, 0.3)[0]
    loss = learn_step(pair, Batch.from_experiences([e]), 0.3, 1e-3,
                      AdamState.zeros_like(pair.main.parameters()))
    assert loss == (q[0, 1] - q_ref) ** 2


def test_repeated_learning_converges_to_reward():
    pair = _pair(2)
    e = exp(1, reward=1)
    e.action = 1
    b = Batch.from_experiences([e])
    adam = AdamState.zeros_like(pair.main.parameters())
    for _ in range(2000):
        learn_step(pair, b, 0.0, 1e-2, adam)
    q, _ = qnet_forward(pair.main, e.state[None, :])
    assert abs(q[0, 1] - 1.0) < 1e-2


def test_learn_step_syncs_target():
    pair = _pair(3, sync=2)
    b = Batch.from_experiences([exp(0, reward=1)])
    adam = AdamState.zeros_like(pair.main.parameters())
    learn_step(pair, b, 0.0, 1e-2, adam)
    assert pair.target.checksum() != pair.main.checksum()
    learn_step(pair, b, 0.0, 1e-2, adam)
    assert pair.target.checksum() == pair.main.checksum()


# -- training ---------------------------------------------------------------

SMALL = RunConfig(hidden_size=16, batch_size=32, epochs=3)


@pytest.fixture(scope="module")
def chain_fold():
    recs = generate_synthetic_apt(None, 4000, seed=3)
    return prepare_fold(preprocess_records(recs, synthetic_schema(), k=4, seed=0), 0, SMALL)


@pytest.fixture(scope="module")
def chain_run(chain_fold):
    d = chain_fold
    return train(d.train.X, d.train.y, d.train.times, SMALL, 7)


def test_zero_epochs_returns_initial_network(chain_fold):
    d = chain_fold
    cfg = SMALL.replace(epochs=0)
    res = train(d.train.X, d.train.y, d.train.times, cfg, 7)
    fresh = build_network(d.train.X.shape[1], 16, 7, cfg.seed_init)
    assert res.epochs == [] and res.pair.main.checksum() == fresh.checksum()


def test_empty_training_split():
    with pytest.raises(ValueError):
        train(np.zeros((0, 3)), [], [], SMALL, 2)


def test_training_is_reproducible():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 5))
    y = rng.integers(0, 3, 80)
    cfg = RunConfig(hidden_size=4, batch_size=8, epochs=2)
    a = train(X, y, np.arange(80), cfg, 3)
    b = train(X, y, np.arange(80), cfg, 3)
    assert a.pair.main.checksum() == b.pair.main.checksum()
    assert [e.mean_loss for e in a.epochs] == [e.mean_loss for e in b.epochs]


def test_epoch_stats(chain_run, chain_fold):
    assert [e.epoch for e in chain_run.epochs] == [0, 1, 2]
    n = len(chain_fold.train)
    assert chain_run.epochs[0].learn_steps == n - SMALL.batch_size + 1
    assert chain_run.epochs[1].learn_steps == n
    assert all(0.1 <= e.epsilon <= 1.0 for e in chain_run.epochs)


def test_reward_non_decreasing_over_first_epochs(chain_run):
    r = [e.mean_reward for e in chain_run.epochs[:3]]
    assert r[0] <= r[1] <= r[2]


def test_trained_per_class_accuracy(chain_run, chain_fold):
    net = chain_run.pair.main
    preds, _ = predict_sequence(net, chain_fold.test.X.astype(net.dtype))
    y = chain_fold.test.y
    for c in np.unique(y):
        assert (preds[y == c] == c).mean() >= 0.95, c


# -- prediction -------------------------------------------------------------

def test_predict_is_deterministic_greedy():
    net = build_network(4, 5, 3, seed=1)
    s = np.random.default_rng(0).normal(size=4).astype(np.float32)
    i1, q1, h1 = predict(net, s)
    i2, q2, h2 = predict(net, s)
    assert i1 == i2 == int(np.argmax(q1)) and q1.tobytes() == q2.tobytes()
    i3, _, _ = predict(net, s, h1)
    assert 0 <= i3 < 3


def test_predict_sequence_carries_hidden_state():
    net = build_network(4, 5, 3, seed=1)
    S = np.random.default_rng(1).normal(size=(6, 4)).astype(np.float32)
    preds, Q = predict_sequence(net, S)
    hidden = None
    for t in range(6):
        i, q, hidden = predict(net, S[t], hidden)
        assert i == preds[t]
        np.testing.assert_allclose(q, Q[t], rtol=1e-6)


# -- tabular oracle ---------------------------------------------------------

def two_state_mdp():
    # action a in state s is correct when a == s; either way we move to the other state
    return FiniteMDP(np.array([[1, 1], [0, 0]]), np.eye(2), max_steps=20)


def test_tabular_two_state_fixed_point():
    Q = tabular_q_oracle(two_state_mdp(), alpha=0.5, discount=0.0, episodes=500, seed=0)
    np.testing.assert_allclose(Q, np.eye(2), atol=1e-6)


def test_tabular_alpha_zero_never_changes():
    Q = tabular_q_oracle(two_state_mdp(), alpha=0.0, discount=0.9, episodes=50, seed=0)
    assert not Q.any()


def chain_mdp(n=5):
    # action 1 moves right, action 0 stays; reward for reaching the last (terminal) state
    nxt = np.array([[s, min(s + 1, n - 1)] for s in range(n)])
    rew = np.zeros((n, 2))
    rew[n - 2, 1] = 1.0
    return FiniteMDP(nxt, rew, frozenset({n - 1}), max_steps=50)


def test_tabular_chain_matches_value_iteration():
    mdp = chain_mdp()
    Q = tabular_q_oracle(mdp, alpha=0.5, discount=0.9, episodes=2000, seed=1, epsilon=0.5)
    V = value_iteration(mdp.next_state, mdp.reward, mdp.terminal, 0.9)
    live = [s for s in range(5) if s not in mdp.terminal]
    assert Q[live].argmax(axis=1).tolist() == V[live].argmax(axis=1).tolist()
    np.testing.assert_allclose(Q[live], V[live], atol=1e-6)
