"""
Two-stage oversampling of rare attack steps
===========================================

Tiny classes are first duplicated up to k+1 members so that SMOTE has enough
neighbours, then SMOTE fills the smaller classes up to the median size with
points on segments between same-class neighbours.
"""

import numpy as np
from proapt.dataset import EncodedSet, random_oversample, smote, sort_by_time

rng = np.random.default_rng(1)
X = np.vstack([rng.normal(0, 1, (200, 2)), rng.normal(4, 1, (40, 2)), rng.normal(-4, 0.5, (3, 2))])
y = np.repeat([0, 1, 2], [200, 40, 3])
es = EncodedSet.from_arrays(X, y, times=rng.uniform(0, 100, len(y)))
print("before:", es.class_counts())

es = random_oversample(es, target_min=7, n_classes=1, seed=0)
print("after random duplication:", es.class_counts())

out, seg = smote(es, k=6, n_classes=2, seed=0, target="median", return_segments=True)
print("after SMOTE:", out.class_counts())

# every synthetic point sits between its base sample and one neighbour
p = out.X[len(es)]
a, b, u = seg.base[0], seg.neighbor[0], seg.u[0]
print("point", p.round(3), "= base + u * (neighbour - base) with u =", round(u, 3))
print(np.allclose(p, es.X[a] + u * (es.X[b] - es.X[a])))

out = sort_by_time(out)
print("times sorted:", bool(np.all(np.diff(out.times) >= 0)))
