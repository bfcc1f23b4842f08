"""Training-split oversampling: random duplication followed by SMOTE."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


@dataclass
class EncodedSet:
    """Encoded states with their next-step targets.

    ``origin`` is the row index in the preprocessed dataset each state came
    from (duplicates and SMOTE points inherit their base sample's origin);
    ``synthetic`` marks SMOTE output.
    """

    X: np.ndarray
    y: np.ndarray
    times: np.ndarray
    origin: np.ndarray
    synthetic: np.ndarray

    @classmethod
    def from_arrays(cls, X, y, times, origin=None) -> "EncodedSet":
        n = len(y)
        origin = np.arange(n) if origin is None else np.asarray(origin, dtype=int)
        return cls(np.asarray(X, float), np.asarray(y, int), np.asarray(times, float),
                   origin, np.zeros(n, dtype=bool))

    def __len__(self) -> int:
        return self.y.shape[0]

    def take(self, idx) -> "EncodedSet":
        return EncodedSet(self.X[idx], self.y[idx], self.times[idx],
                          self.origin[idx], self.synthetic[idx])

    def concat(self, other: "EncodedSet") -> "EncodedSet":
        return EncodedSet(
            np.concatenate([self.X, other.X]), np.concatenate([self.y, other.y]),
            np.concatenate([self.times, other.times]),
            np.concatenate([self.origin, other.origin]),
            np.concatenate([self.synthetic, other.synthetic]),
        )

    def class_counts(self) -> dict[int, int]:
        cls, cnt = np.unique(self.y, return_counts=True)
        return dict(zip(cls.tolist(), cnt.tolist()))


@dataclass
class SmoteSegments:
    """Provenance of SMOTE points: ``point = X[base] + u * (X[neighbor] - X[base])``
    on continuous columns, indices into the set passed to :func:`smote`."""

    base: np.ndarray
    neighbor: np.ndarray
    u: np.ndarray


def smallest_classes(y, n_classes: int) -> list[int]:
    """The ``n_classes`` least frequent classes present in ``y`` (ties by index)."""
    cls, cnt = np.unique(y, return_counts=True)
    if cls.size == 0:
        raise ValueError("no classes to oversample")
    if not 1 <= n_classes <= cls.size:
        raise ValueError(f"n_classes={n_classes} must lie in 1..{cls.size}")
    order = np.lexsort((cls, cnt))
    return cls[order[:n_classes]].tolist()


def random_oversample(es: EncodedSet, target_min: int, n_classes: int, seed: int) -> EncodedSet:
    """Duplicate members of the smallest classes until each holds ``target_min``."""
    rng = np.random.default_rng(seed)
    extra = []
    for c in smallest_classes(es.y, n_classes):
        members = np.flatnonzero(es.y == c)
        short = target_min - members.size
        if short > 0:
            extra.append(rng.choice(members, size=short, replace=True))
    if not extra:
        return es
    return es.concat(es.take(np.concatenate(extra)))


def knn_same_class(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of each point's ``k`` nearest other points (Euclidean)."""
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k + 1)
    idx = np.atleast_2d(idx)
    out = np.empty((points.shape[0], k), dtype=int)
    for i, row in enumerate(idx):
        row = row[row != i]
        out[i] = row[:k]
    return out


def smote(es: EncodedSet, k: int, n_classes: int, seed: int, continuous=None,
          target="median", return_segments: bool = False):
    """Synthesize minority points on segments to same-class nearest neighbours.

    The ``n_classes`` smallest classes are raised to ``target`` records
    (``"median"`` = median class size of ``es``, or an explicit count).
    Distances and interpolation use the ``continuous`` columns; the other
    columns are copied from the base sample. Timestamps are interpolated with
    the same coefficient. Synthetic rows are appended after the originals.
    """
    rng = np.random.default_rng(seed)
    d = es.X.shape[1]
    cont = np.ones(d, dtype=bool) if continuous is None else np.asarray(continuous, bool)
    counts = es.class_counts()
    goal = int(np.median(list(counts.values()))) if target == "median" else int(target)
    new_rows, seg_base, seg_nb, seg_u = [], [], [], []
    for c in smallest_classes(es.y, n_classes):
        members = np.flatnonzero(es.y == c)
        n_new = goal - members.size
        if n_new <= 0:
            continue
        if members.size < k + 1:
            raise ValueError(
                f"class {c} has {members.size} records; SMOTE with k={k} needs at least {k + 1}"
            )
        nbrs = knn_same_class(es.X[members][:, cont], k)
        pick = rng.integers(0, members.size, n_new)
        which = rng.integers(0, k, n_new)
        u = rng.random(n_new)
        a = members[pick]
        b = members[nbrs[pick, which]]
        new_rows.append((a, b, u))
        seg_base.append(a)
        seg_nb.append(b)
        seg_u.append(u)
    segments = SmoteSegments(
        np.concatenate(seg_base) if seg_base else np.zeros(0, int),
        np.concatenate(seg_nb) if seg_nb else np.zeros(0, int),
        np.concatenate(seg_u) if seg_u else np.zeros(0),
    )
    out = es
    if new_rows:
        a, b, u = segments.base, segments.neighbor, segments.u
        X = es.X[a].copy()
        X[:, cont] += u[:, None] * (es.X[b][:, cont] - es.X[a][:, cont])
        times = es.times[a] + u * (es.times[b] - es.times[a])
        synth = EncodedSet(X, es.y[a].copy(), times, es.origin[a].copy(),
                           np.ones(a.size, dtype=bool))
        out = es.concat(synth)
    return (out, segments) if return_segments else out


def sort_by_time(es: EncodedSet) -> EncodedSet:
    """Stable ascending sort on time; ties keep input order."""
    return es.take(np.argsort(es.times, kind="stable"))
