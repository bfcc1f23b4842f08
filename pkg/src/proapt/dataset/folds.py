from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FoldAssignment:
    k: int
    folds: np.ndarray  # fold index per record

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """Record indices of the training and held-out portions for ``fold``."""
        if not 0 <= fold < self.k:
            raise ValueError(f"fold {fold} out of range for k={self.k}")
        return np.flatnonzero(self.folds != fold), np.flatnonzero(self.folds == fold)


def stratified_kfold(labels, k: int, seed: int) -> FoldAssignment:
    """Assign each record to one of ``k`` folds, class by class.

    Each class is shuffled and dealt round-robin. The starting fold of each
    class continues where the previous class stopped, which keeps overall
    fold sizes within one of each other as well.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of records ({n})")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    offset = 0
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        folds[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return FoldAssignment(k, folds)
