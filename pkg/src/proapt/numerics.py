"""Dense numerics for the Q-network: activations, an LSTM layer, a dense
layer, MSE loss, Adam and a finite-difference gradient checker.

Parameters are plain numpy arrays. The LSTM keeps its four gates fused in
one weight block per path, with column blocks ordered ``i, f, o, g``
(input, forget, output gates, then the tanh candidate)::

    z_t = x_t @ w_ih + h_{t-1} @ w_hh + b
    i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

The recurrent loop is compiled with numba; everything that can be done for a
whole sequence at once (input projection, softmax, dense layer and the weight
gradients) stays in numpy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

GATES = ("i", "f", "o", "g")
SOFTMAX_POSITIONS = ("pre_fc", "none")


class ShapeError(ValueError):
    """Raised when array dimensions do not line up."""


def _shape(a) -> tuple:
    return tuple(np.shape(a))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {_shape(a)} by {_shape(b)}")
    return a @ b


def sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def softmax(v: np.ndarray) -> np.ndarray:
    """Softmax along the last axis, with max subtraction."""
    v = np.asarray(v)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# parameter containers


@dataclass
class LstmParams:
    w_ih: np.ndarray  # (input_size, 4 * hidden_size)
    w_hh: np.ndarray  # (hidden_size, 4 * hidden_size)
    b: np.ndarray  # (4 * hidden_size,)

    def __post_init__(self):
        n_in, four_h = self.w_ih.shape
        if four_h % 4 or self.w_hh.shape != (four_h // 4, four_h) or self.b.shape != (four_h,):
            raise ShapeError(
                f"inconsistent LSTM shapes w_ih={self.w_ih.shape} "
                f"w_hh={self.w_hh.shape} b={self.b.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_hh.shape[0]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views ``(w_ih, w_hh, b)`` of a single gate."""
        k = GATES.index(name)
        h = self.hidden_size
        s = slice(k * h, (k + 1) * h)
        return self.w_ih[:, s], self.w_hh[:, s], self.b[s]


@dataclass
class DenseParams:
    w: np.ndarray  # (hidden_size, n_actions)
    b: np.ndarray  # (n_actions,)

    def __post_init__(self):
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[1],):
            raise ShapeError(f"inconsistent dense shapes w={self.w.shape} b={self.b.shape}")


def init_lstm(input_size: int, hidden_size: int, rng: np.random.Generator,
              dtype=np.float32) -> LstmParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.0."""
    bound = 1.0 / np.sqrt(hidden_size)
    w_ih = rng.uniform(-bound, bound, (input_size, 4 * hidden_size))
    w_hh = rng.uniform(-bound, bound, (hidden_size, 4 * hidden_size))
    b = rng.uniform(-bound, bound, 4 * hidden_size)
    b[hidden_size:2 * hidden_size] = 1.0
    return LstmParams(w_ih.astype(dtype), w_hh.astype(dtype), b.astype(dtype))


def init_dense(hidden_size: int, n_actions: int, rng: np.random.Generator,
               dtype=np.float32) -> DenseParams:
    bound = 1.0 / np.sqrt(hidden_size)
    w = rng.uniform(-bound, bound, (hidden_size, n_actions))
    b = rng.uniform(-bound, bound, n_actions)
    return DenseParams(w.astype(dtype), b.astype(dtype))


# --------------------------------------------------------------------------
# LSTM


@dataclass
class LstmCellCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    gates: np.ndarray  # activated i, f, o, g
    c: np.ndarray


def lstm_cell_forward(x, h_prev, c_prev, p: LstmParams):
    """One LSTM step. Returns ``(h, c, cache)``."""
    x = np.asarray(x)
    h_prev = np.asarray(h_prev)
    c_prev = np.asarray(c_prev)
    H = p.hidden_size
    if x.shape != (p.input_size,):
        raise ShapeError(f"input has shape {x.shape}, expected ({p.input_size},)")
    if h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeError(
            f"state shapes h={h_prev.shape} c={c_prev.shape}, expected ({H},)"
        )
    z = x @ p.w_ih + h_prev @ p.w_hh + p.b
    gates = np.empty_like(z)
    gates[:3 * H] = sigmoid(z[:3 * H])
    gates[3 * H:] = np.tanh(z[3 * H:])
    i, f, g = gates[:H], gates[H:2 * H], gates[3 * H:]
    o = gates[2 * H:3 * H]
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, LstmCellCache(x, h_prev, c_prev, gates, c)


def lstm_cell_backward(dh, dc, cache: LstmCellCache, p: LstmParams):
    """Backprop through one step.

    Returns ``(grads, dx, dh_prev, dc_prev)`` where ``grads`` holds
    ``w_ih``, ``w_hh`` and ``b``.
    """
    H = p.hidden_size
    g_ = cache.gates
    i, f, o, g = g_[:H], g_[H:2 * H], g_[2 * H:3 * H], g_[3 * H:]
    tc = np.tanh(cache.c)
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * cache.c_prev * f * (1.0 - f),
        dh * tc * o * (1.0 - o),
        dc * i * (1.0 - g * g),
    ])
    grads = {
        "w_ih": np.outer(cache.x, dz),
        "w_hh": np.outer(cache.h_prev, dz),
        "b": dz,
    }
    return grads, p.w_ih @ dz, p.w_hh @ dz, dc * f


@numba.njit(cache=True)
def _lstm_scan(xproj, w_hh, h0, c0):
    T = xproj.shape[0]
    H = h0.shape[0]
    hs = np.empty((T + 1, H), dtype=xproj.dtype)
    cs = np.empty((T + 1, H), dtype=xproj.dtype)
    tcs = np.empty((T, H), dtype=xproj.dtype)
    gates = np.empty((T, 4 * H), dtype=xproj.dtype)
    hs[0] = h0
    cs[0] = c0
    one = xproj.dtype.type(1.0)
    for t in range(T):
        z = xproj[t] + np.dot(hs[t], w_hh)
        for j in range(3 * H):
            gates[t, j] = one / (one + np.exp(-z[j]))
        for j in range(H):
            gates[t, 3 * H + j] = np.tanh(z[3 * H + j])
        for j in range(H):
            c = gates[t, H + j] * cs[t, j] + gates[t, j] * gates[t, 3 * H + j]
            cs[t + 1, j] = c
            tc = np.tanh(c)
            tcs[t, j] = tc
            hs[t + 1, j] = gates[t, 2 * H + j] * tc
    return hs, cs, tcs, gates


@numba.njit(cache=True)
def _lstm_scan_back(dhs, gates, cs, tcs, w_hh_t, dh_last, dc_last):
    T = dhs.shape[0]
    H = dhs.shape[1]
    dz = np.empty((T, 4 * H), dtype=dhs.dtype)
    dh_next = dh_last.copy()
    dc_next = dc_last.copy()
    one = dhs.dtype.type(1.0)
    for t in range(T - 1, -1, -1):
        for j in range(H):
            dh = dhs[t, j] + dh_next[j]
            i = gates[t, j]
            f = gates[t, H + j]
            o = gates[t, 2 * H + j]
            g = gates[t, 3 * H + j]
            tc = tcs[t, j]
            dc = dc_next[j] + dh * o * (one - tc * tc)
            dz[t, j] = dc * g * i * (one - i)
            dz[t, H + j] = dc * cs[t, j] * f * (one - f)
            dz[t, 2 * H + j] = dh * tc * o * (one - o)
            dz[t, 3 * H + j] = dc * i * (one - g * g)
            dc_next[j] = dc * f
        dh_next = np.dot(dz[t], w_hh_t)
    return dz, dh_next, dc_next


# --------------------------------------------------------------------------
# Q-network forward / backward


@dataclass
class QNetCache:
    xs: np.ndarray
    hs: np.ndarray  # (T+1, H), row 0 is the initial state
    cs: np.ndarray
    tcs: np.ndarray
    gates: np.ndarray
    ps: np.ndarray  # dense-layer input per step
    lstm: LstmParams
    dense: DenseParams
    softmax_position: str

    @property
    def h(self) -> np.ndarray:
        return self.hs[-1]

    @property
    def c(self) -> np.ndarray:
        return self.cs[-1]


def qnet_forward(net, seq, h0=None, c0=None):
    """Run the LSTM -> softmax -> dense stack over a sequence.

    ``net`` is anything with ``lstm``, ``dense`` and ``softmax_position``
    attributes. Hidden and cell state start at zero unless given. Returns
    the ``(T, n_actions)`` Q-values and a cache for :func:`qnet_backward`.
    """
    p, d = net.lstm, net.dense
    dtype = p.w_ih.dtype
    xs = np.asarray(seq, dtype=dtype)
    if xs.ndim == 1:
        xs = xs[None, :]
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ShapeError(f"expected a nonempty (T, {p.input_size}) sequence, got {xs.shape}")
    if xs.shape[1] != p.input_size:
        raise ShapeError(f"state dimension {xs.shape[1]} does not match network input {p.input_size}")
    H = p.hidden_size
    h0 = np.zeros(H, dtype) if h0 is None else np.ascontiguousarray(h0, dtype=dtype)
    c0 = np.zeros(H, dtype) if c0 is None else np.ascontiguousarray(c0, dtype=dtype)
    if h0.shape != (H,) or c0.shape != (H,):
        raise ShapeError(f"initial state shapes {h0.shape}/{c0.shape}, expected ({H},)")
    xproj = np.ascontiguousarray(xs @ p.w_ih + p.b)
    hs, cs, tcs, gates = _lstm_scan(xproj, np.ascontiguousarray(p.w_hh), h0, c0)
    out = hs[1:]
    ps = softmax(out) if net.softmax_position == "pre_fc" else out
    q = ps @ d.w + d.b
    return q, QNetCache(xs, hs, cs, tcs, gates, ps, p, d, net.softmax_position)


def qnet_backward(cache: QNetCache, dq) -> dict[str, np.ndarray]:
    """Exact gradients of ``sum(dq * q)`` by backprop through time."""
    dq = np.asarray(dq, dtype=cache.xs.dtype)
    if dq.ndim == 1:
        dq = dq[None, :]
    if dq.shape != (cache.xs.shape[0], cache.dense.w.shape[1]):
        raise ValueError(
            f"dq has shape {dq.shape}, expected {(cache.xs.shape[0], cache.dense.w.shape[1])}"
        )
    H = cache.lstm.hidden_size
    dps = dq @ cache.dense.w.T
    if cache.softmax_position == "pre_fc":
        p = cache.ps
        dhs = p * (dps - (p * dps).sum(axis=1, keepdims=True))
    else:
        dhs = dps
    zero = np.zeros(H, dhs.dtype)
    dz, _, _ = _lstm_scan_back(
        np.ascontiguousarray(dhs), cache.gates, cache.cs, cache.tcs,
        np.ascontiguousarray(cache.lstm.w_hh.T), zero, zero,
    )
    return {
        "lstm.w_ih": cache.xs.T @ dz,
        "lstm.w_hh": cache.hs[:-1].T @ dz,
        "lstm.b": dz.sum(axis=0),
        "dense.w": cache.ps.T @ dq,
        "dense.b": dq.sum(axis=0),
    }


def mse_loss(q, q_ref):
    """Mean squared error and its gradient with respect to ``q``."""
    q = np.asarray(q, dtype=float)
    q_ref = np.asarray(q_ref, dtype=float)
    if q.shape != q_ref.shape or q.ndim != 1 or q.size == 0:
        raise ValueError(f"mse_loss needs equal nonempty vectors, got {q.shape} and {q_ref.shape}")
    diff = q - q_ref
    n = q.size
    return float(diff @ diff / n), (2.0 / n) * diff


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], **kw) -> "AdamState":
        return cls(
            {k: np.zeros_like(a) for k, a in params.items()},
            {k: np.zeros_like(a) for k, a in params.items()},
            **kw,
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float):
    """Bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for k, a in params.items():
        if k not in grads or grads[k].shape != a.shape or state.m[k].shape != a.shape:
            raise ShapeError(f"gradient/moment shape mismatch for {k!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for k, a in params.items():
        g = grads[k].astype(a.dtype, copy=False)
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        a -= (lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(a.dtype, copy=False)
    return params, state


# --------------------------------------------------------------------------
# gradient check


def grad_check(net, seq, dq, step: float = 1e-5, grads=None,
               floor: float = 1e-6) -> float:
    """Largest relative error between analytic and central-difference gradients.

    The scalar being differentiated is ``sum(dq * qnet_forward(net, seq))``.
    ``grads`` overrides the analytic gradients (used to test the checker).
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    dq = np.asarray(dq, dtype=np.float64)
    if grads is None:
        _, cache = qnet_forward(net, seq)
        grads = qnet_backward(cache, dq)
    worst = 0.0
    for name, theta in net.parameters().items():
        if theta.dtype != np.float64:
            raise TypeError("grad_check requires a 64-bit network")
        g = grads[name]
        flat = theta.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + step
            up = float((qnet_forward(net, seq)[0] * dq).sum())
            flat[j] = old - step
            down = float((qnet_forward(net, seq)[0] * dq).sum())
            flat[j] = old
            num = (up - down) / (2 * step)
            a = float(g.reshape(-1)[j])
            err = abs(a - num) / max(abs(a), abs(num), floor)
            worst = max(worst, err)
    return worst
