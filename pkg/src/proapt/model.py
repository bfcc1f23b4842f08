"""The Q-network (one LSTM layer, softmax, one dense layer), the main/target
pair, and the binary checkpoint format.

Checkpoint layout, all integers and reals little-endian::

    b"PAPT"                     magic
    u32                         format version (1)
    u32 u32 u32                 input_size, hidden_size, n_actions
    u32 + n * (u32 + utf-8)     vocabulary, each name length-prefixed
    u64 + f64[n]                normalization means
    u64 + f64[n]                normalization stds
    5 * (u64 + f32[n])          lstm.w_ih, lstm.w_hh, lstm.b, dense.w, dense.b
                                (row-major, LSTM gate blocks ordered i, f, o, g)
    u32                         CRC32 of every preceding byte
"""
from __future__ import annotations

import copy
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from proapt.numerics import (
    SOFTMAX_POSITIONS,
    DenseParams,
    LstmParams,
    ShapeError,
    init_dense,
    init_lstm,
    qnet_forward,
)

MAGIC = b"PAPT"
FORMAT_VERSION = 1
PARAM_ORDER = ("lstm.w_ih", "lstm.w_hh", "lstm.b", "dense.w", "dense.b")


class CheckpointError(ValueError):
    """Malformed or corrupted checkpoint file."""


@dataclass
class QNetwork:
    lstm: LstmParams
    dense: DenseParams
    softmax_position: str = "pre_fc"

    def __post_init__(self):
        if self.dense.w.shape[0] != self.lstm.hidden_size:
            raise ShapeError(
                f"dense input {self.dense.w.shape[0]} != hidden size {self.lstm.hidden_size}"
            )
        if self.softmax_position not in SOFTMAX_POSITIONS:
            raise ValueError(f"softmax_position must be one of {SOFTMAX_POSITIONS}")

    @property
    def input_size(self) -> int:
        return self.lstm.input_size

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    @property
    def n_actions(self) -> int:
        return self.dense.w.shape[1]

    @property
    def dtype(self):
        return self.lstm.w_ih.dtype

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every parameter array, in checkpoint order."""
        return {
            "lstm.w_ih": self.lstm.w_ih,
            "lstm.w_hh": self.lstm.w_hh,
            "lstm.b": self.lstm.b,
            "dense.w": self.dense.w,
            "dense.b": self.dense.b,
        }

    def forward(self, seq, h0=None, c0=None):
        return qnet_forward(self, seq, h0, c0)

    def checksum(self) -> int:
        crc = 0
        for a in self.parameters().values():
            crc = zlib.crc32(np.ascontiguousarray(a).tobytes(), crc)
        return crc

    def astype(self, dtype) -> "QNetwork":
        p = {k: a.astype(dtype) for k, a in self.parameters().items()}
        return QNetwork(
            LstmParams(p["lstm.w_ih"], p["lstm.w_hh"], p["lstm.b"]),
            DenseParams(p["dense.w"], p["dense.b"]),
            self.softmax_position,
        )


def build_network(input_size: int, hidden_size: int, n_actions: int, seed: int,
                  dtype=np.float32, softmax_position: str = "pre_fc") -> QNetwork:
    for name, v in (("input_size", input_size), ("hidden_size", hidden_size),
                    ("n_actions", n_actions)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    rng = np.random.default_rng(seed)
    lstm = init_lstm(input_size, hidden_size, rng, dtype)
    dense = init_dense(hidden_size, n_actions, rng, dtype)
    return QNetwork(lstm, dense, softmax_position)


@dataclass
class NetworkPair:
    main: QNetwork
    target: QNetwork
    sync_period: int
    rounds_since_sync: int = 0

    @classmethod
    def from_network(cls, net: QNetwork, sync_period: int) -> "NetworkPair":
        return cls(net, copy.deepcopy(net), sync_period)

    def tick(self) -> None:
        """Count one learning round; copy main into target every ``sync_period``."""
        self.rounds_since_sync += 1
        if self.rounds_since_sync >= self.sync_period:
            sync_target(self)


def sync_target(pair: NetworkPair) -> NetworkPair:
    src = pair.main.parameters()
    dst = pair.target.parameters()
    for k, a in src.items():
        if dst[k].shape != a.shape:
            raise ShapeError(f"target {k} has shape {dst[k].shape}, main has {a.shape}")
    for k, a in src.items():
        np.copyto(dst[k], a)
    pair.target.softmax_position = pair.main.softmax_position
    pair.rounds_since_sync = 0
    return pair


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(net: QNetwork, stats, vocab, path) -> None:
    """Write ``net`` with its normalization stats and label vocabulary.

    ``stats`` needs ``mean`` and ``std`` arrays; ``vocab`` is a sequence of
    class names or anything with a ``names`` attribute.
    """
    names = list(getattr(vocab, "names", vocab))
    if len(names) != net.n_actions:
        raise ShapeError(f"vocabulary has {len(names)} names, network has {net.n_actions} actions")
    buf = bytearray(MAGIC)
    buf += struct.pack("<IIII", FORMAT_VERSION, net.input_size, net.hidden_size, net.n_actions)
    buf += struct.pack("<I", len(names))
    for n in names:
        raw = n.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
    for arr in (stats.mean, stats.std):
        arr = np.asarray(arr, dtype="<f8")
        buf += struct.pack("<Q", arr.size) + arr.tobytes()
    for k, a in net.parameters().items():
        arr = np.ascontiguousarray(a, dtype="<f4")
        buf += struct.pack("<Q", arr.size) + arr.tobytes()
    buf += struct.pack("<I", zlib.crc32(buf))
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint reading {what} at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype: str, what: str) -> np.ndarray:
        (n,) = self.unpack("<Q", what + " length")
        size = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(n * size, what), dtype=dtype).copy()


def load_checkpoint(path, softmax_position: str = "pre_fc"):
    """Inverse of :func:`save_checkpoint`. Returns ``(net, stats, vocab)``.

    The network comes back in 32-bit, the precision it was stored at.
    """
    from proapt.dataset.encoding import LabelVocabulary, NormalizationStats

    data = Path(path).read_bytes()
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} at offset 0")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version} at offset 4")
    n_in, hidden, n_act = r.unpack("<III", "sizes")
    (n_names,) = r.unpack("<I", "vocabulary size")
    names = []
    for _ in range(n_names):
        (ln,) = r.unpack("<I", "name length")
        names.append(r.take(ln, "name").decode("utf-8"))
    mean = r.array("<f8", "means").astype(np.float64)
    std = r.array("<f8", "stds").astype(np.float64)
    shapes = {
        "lstm.w_ih": (n_in, 4 * hidden),
        "lstm.w_hh": (hidden, 4 * hidden),
        "lstm.b": (4 * hidden,),
        "dense.w": (hidden, n_act),
        "dense.b": (n_act,),
    }
    params = {}
    for k in PARAM_ORDER:
        start = r.pos
        a = r.array("<f4", k).astype(np.float32)
        if a.size != int(np.prod(shapes[k])):
            raise CheckpointError(
                f"{k} holds {a.size} values, expected {shapes[k]} at offset {start}"
            )
        params[k] = a.reshape(shapes[k])
    body_end = r.pos
    (crc,) = r.unpack("<I", "crc")
    if crc != zlib.crc32(data[:body_end]):
        raise CheckpointError(f"CRC mismatch at offset {body_end}")
    if r.pos != len(data):
        raise CheckpointError(f"trailing bytes at offset {r.pos}")
    net = QNetwork(
        LstmParams(params["lstm.w_ih"], params["lstm.w_hh"], params["lstm.b"]),
        DenseParams(params["dense.w"], params["dense.b"]),
        softmax_position,
    )
    return net, NormalizationStats(mean, std), LabelVocabulary(names)
