"""Preprocessed datasets: the clean -> derive -> encode -> fold pipeline and
its on-disk form (``encoded.csv`` plus a ``stats.json`` sidecar)."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from proapt.dataset.encoding import (
    FeatureLayout,
    LabelVocabulary,
    encode_records,
    zscore_fit,
)
from proapt.dataset.folds import FoldAssignment, stratified_kfold
from proapt.dataset.oversample import EncodedSet
from proapt.dataset.records import Schema, clean_labels, derive_next_step_labels

ENCODED_FILE = "encoded.csv"
SIDECAR_FILE = "stats.json"


@dataclass
class PreprocessedDataset:
    X: np.ndarray  # encoded, not yet normalized
    y: np.ndarray  # next-step class index
    layout: FeatureLayout
    folds: FoldAssignment
    schema: Schema | None = None
    info: dict = field(default_factory=dict)

    @property
    def vocab(self) -> LabelVocabulary:
        return self.layout.vocab

    @property
    def times(self) -> np.ndarray:
        return self.X[:, self.layout.time_column]

    def encoded_set(self, idx=None) -> EncodedSet:
        es = EncodedSet.from_arrays(self.X, self.y, self.times)
        return es if idx is None else es.take(idx)

    def normalization_exclusions(self, normalize_onehot: bool) -> np.ndarray:
        return np.zeros(0, int) if normalize_onehot else self.layout.onehot_columns

    def save(self, out_dir, normalize_onehot: bool = True) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / ENCODED_FILE, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.layout.columns + ["next_step", "fold"])
            for row, y, f in zip(self.X, self.y, self.folds.folds):
                w.writerow([repr(float(v)) for v in row] + [int(y), int(f)])
        fold_stats = []
        for k in range(self.folds.k):
            tr, _ = self.folds.train_test(k)
            st = zscore_fit(self.X[tr], self.normalization_exclusions(normalize_onehot))
            fold_stats.append(st.to_dict())
        sidecar = {
            "layout": self.layout.to_dict(),
            "schema": None if self.schema is None else self.schema.to_dict(),
            "k_folds": self.folds.k,
            "fold_stats": fold_stats,
            "info": self.info,
        }
        (out / SIDECAR_FILE).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, in_dir) -> "PreprocessedDataset":
        d = Path(in_dir)
        sidecar = json.loads((d / SIDECAR_FILE).read_text())
        layout = FeatureLayout.from_dict(sidecar["layout"])
        with open(d / ENCODED_FILE, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            if header[:-2] != layout.columns:
                raise ValueError(f"{d / ENCODED_FILE}: header does not match sidecar layout")
            rows = [list(map(float, row)) for row in r]
        arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
        schema = None if sidecar["schema"] is None else Schema.from_dict(sidecar["schema"])
        return cls(
            X=arr[:, :-2], y=arr[:, -2].astype(int),
            layout=layout,
            folds=FoldAssignment(int(sidecar["k_folds"]), arr[:, -1].astype(int)),
            schema=schema, info=sidecar.get("info", {}),
        )


def preprocess_records(records, schema: Schema, k: int, seed: int,
                       label_in_state: bool = True) -> PreprocessedDataset:
    """Clean labels, derive next steps, encode, and assign stratified folds."""
    n_in = len(records)
    recs = clean_labels(records, schema.normal_label)
    recs = derive_next_step_labels(recs, schema.normal_label)
    labels = [r.activity_label for r in recs] + [r.next_step_label for r in recs]
    vocab = LabelVocabulary.from_labels(labels, schema.label_order)
    layout = FeatureLayout(tuple(schema.feature_names), vocab, label_in_state)
    X = encode_records(recs, layout)
    y = np.array([vocab.index(r.next_step_label) for r in recs], dtype=int)
    folds = stratified_kfold(y, k, seed)
    info = {"input_rows": n_in, "removed_rows": n_in - len(recs), "rows": len(recs),
            "seed": seed}
    return PreprocessedDataset(X, y, layout, folds, schema, info)
