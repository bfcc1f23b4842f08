"""Per-fold pipeline: normalize on the training portion, oversample it,
re-sort by time, and train the agent."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from proapt.agent import TrainResult, train
from proapt.config import RunConfig
from proapt.dataset.encoding import NormalizationStats, zscore_apply, zscore_fit
from proapt.dataset.oversample import (
    EncodedSet,
    random_oversample,
    smote,
    sort_by_time,
)
from proapt.dataset.store import PreprocessedDataset

log = logging.getLogger(__name__)


@dataclass
class FoldData:
    fold: int
    train: EncodedSet  # normalized, oversampled, time-sorted
    test: EncodedSet  # normalized, time-sorted
    stats: NormalizationStats


def oversample_training(es: EncodedSet, config: RunConfig, continuous, seed: int) -> EncodedSet:
    """Random oversampling of the smallest classes, then SMOTE."""
    cfg = config.resolve(len(es))
    counts = es.class_counts()
    n_present = len(counts)
    # any class still under the SMOTE minimum is topped up too, not only the smallest few
    n_small = sum(c < cfg.random_oversample_min for c in counts.values())
    n_rand = min(max(cfg.random_oversample_classes, n_small), n_present)
    es = random_oversample(es, cfg.random_oversample_min, n_rand, seed)
    es = smote(es, cfg.smote_k, min(cfg.smote_classes, n_present), seed + 1,
               continuous=continuous, target=cfg.smote_target)
    return es


def prepare_fold(ds: PreprocessedDataset, fold: int, config: RunConfig) -> FoldData:
    tr_idx, te_idx = ds.folds.train_test(fold)
    stats = zscore_fit(ds.X[tr_idx], ds.normalization_exclusions(config.normalize_onehot))
    full = ds.encoded_set()
    full.X = zscore_apply(full.X, stats)
    train_set = full.take(tr_idx)
    if config.oversample:
        train_set = oversample_training(train_set, config, ds.layout.continuous_mask,
                                        config.seed_data + 1000 * (fold + 1))
    return FoldData(fold, sort_by_time(train_set), sort_by_time(full.take(te_idx)), stats)


def fit_fold(data: FoldData, config: RunConfig, n_actions: int, on_epoch=None) -> TrainResult:
    log.info("fold %d: training on %d records", data.fold, len(data.train))
    return train(data.train.X, data.train.y, data.train.times, config, n_actions,
                 on_epoch=on_epoch)


def normalize_for_net(X: np.ndarray, stats: NormalizationStats, dtype) -> np.ndarray:
    return zscore_apply(X, stats).astype(dtype)
