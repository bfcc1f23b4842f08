"""Numeric encoding of flow records and z-score normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from proapt.dataset.records import FlowRecord, parse_ip


class EncodingError(ValueError):
    pass


class LabelVocabulary:
    """Ordered class names with dense indices ``0..n-1``."""

    def __init__(self, names):
        self.names = tuple(names)
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate names in vocabulary {self.names}")
        self._index = {n: i for i, n in enumerate(self.names)}

    @classmethod
    def from_labels(cls, labels, pinned=None) -> "LabelVocabulary":
        """Lexicographic vocabulary over ``labels``; ``pinned`` fixes the order."""
        seen = set(labels)
        if pinned is not None:
            missing = seen - set(pinned)
            if missing:
                raise EncodingError(f"labels {sorted(missing)} are not in the pinned order")
            return cls(pinned)
        return cls(sorted(seen))

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise EncodingError(f"label {name!r} is not in the vocabulary") from None

    def __contains__(self, name) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelVocabulary) and self.names == other.names

    def __repr__(self) -> str:
        return f"LabelVocabulary({list(self.names)})"


@dataclass(frozen=True)
class FeatureLayout:
    """Column layout of an encoded state vector.

    ``[src octets x4, dst octets x4, src_port, dst_port, unix_time,
    flow features..., one-hot(activity label)]``
    """

    feature_names: tuple[str, ...]
    vocab: LabelVocabulary
    label_in_state: bool = True

    @property
    def columns(self) -> list[str]:
        cols = [f"src_ip_{k}" for k in range(4)] + [f"dst_ip_{k}" for k in range(4)]
        cols += ["src_port", "dst_port", "unix_time"]
        cols += list(self.feature_names)
        if self.label_in_state:
            cols += [f"label={n}" for n in self.vocab.names]
        return cols

    @property
    def width(self) -> int:
        return 11 + len(self.feature_names) + (len(self.vocab) if self.label_in_state else 0)

    @property
    def time_column(self) -> int:
        return 10

    @property
    def onehot_columns(self) -> np.ndarray:
        if not self.label_in_state:
            return np.zeros(0, dtype=int)
        start = 11 + len(self.feature_names)
        return np.arange(start, start + len(self.vocab))

    @property
    def continuous_mask(self) -> np.ndarray:
        """True for time and flow features; octets, ports and one-hot are categorical."""
        m = np.zeros(self.width, dtype=bool)
        m[10:11 + len(self.feature_names)] = True
        return m

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names), "vocabulary": list(self.vocab.names),
                "label_in_state": self.label_in_state, "columns": self.columns}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureLayout":
        return cls(tuple(d["feature_names"]), LabelVocabulary(d["vocabulary"]),
                   bool(d["label_in_state"]))


def encode_record(r: FlowRecord, vocab: LabelVocabulary, feature_names=None,
                  label_in_state: bool = True) -> np.ndarray:
    feature_names = list(r.features) if feature_names is None else list(feature_names)
    head = [*parse_ip(r.src_ip), *parse_ip(r.dst_ip), r.src_port, r.dst_port, r.unix_time]
    feats = [r.features[f] for f in feature_names]
    out = np.array(head + feats, dtype=np.float64)
    if label_in_state:
        onehot = np.zeros(len(vocab))
        onehot[vocab.index(r.activity_label)] = 1.0
        out = np.concatenate([out, onehot])
    return out


def encode_records(records, layout: FeatureLayout) -> np.ndarray:
    X = np.empty((len(records), layout.width))
    for i, r in enumerate(records):
        X[i] = encode_record(r, layout.vocab, layout.feature_names, layout.label_in_state)
    return X


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float))


def zscore_fit(X, exclude=()) -> NormalizationStats:
    """Population mean and std per column. Excluded columns pass through unchanged."""
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    ex = np.asarray(exclude, dtype=int)
    mean[ex] = 0.0
    std[ex] = 1.0
    return NormalizationStats(mean, std)


def zscore_apply(X, stats: NormalizationStats) -> np.ndarray:
    """``(x - mean) / std``, with zero-variance columns mapped to 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != stats.mean.shape[0]:
        raise EncodingError(f"state width {X.shape[-1]} != stats width {stats.mean.shape[0]}")
    safe = np.where(stats.std > 0, stats.std, 1.0)
    Z = (X - stats.mean) / safe
    Z[..., stats.std == 0] = 0.0
    return Z
