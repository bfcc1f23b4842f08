"""
From flow records to encoded, folded states
===========================================

A synthetic trace mixes benign traffic with one attacker walking through six
stages. Each record gets the label of what happens next, is encoded as a
numeric state, and is assigned to a stratified fold.
"""

import numpy as np
from proapt.dataset import (
    derive_next_step_labels, generate_synthetic_apt, preprocess_records, synthetic_schema,
    zscore_apply, zscore_fit,
)

records = generate_synthetic_apt(None, n=3000, seed=0)
for r in records[:5]:
    print(r.time, r.src_ip, "->", r.dst_ip, r.activity_label)

# normal records look ahead along their own source IP; attack records along the attack
labelled = derive_next_step_labels(records)
print(f"{len(records)} records, {len(labelled)} with a next step")
attack = [r for r in labelled if r.activity_label != "Normal"][:6]
for r in attack:
    print(f"{r.activity_label:22s} next: {r.next_step_label}")

ds = preprocess_records(records, synthetic_schema(), k=4, seed=0)
print("columns:", ds.layout.columns)
print("class counts:", dict(zip(ds.vocab.names, np.bincount(ds.y).tolist())))
print("fold sizes:", np.bincount(ds.folds.folds).tolist())

# normalization is fitted on the training portion only
train, test = ds.folds.train_test(0)
stats = zscore_fit(ds.X[train])
Z = zscore_apply(ds.X[test], stats)
print("test-fold means after train-fitted z-score:", Z.mean(axis=0).round(2))
