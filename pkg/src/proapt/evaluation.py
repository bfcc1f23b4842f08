"""Confusion matrices, multiclass metrics, cross-validation and latency."""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from proapt.agent import predict, predict_sequence
from proapt.config import RunConfig
from proapt.dataset.store import PreprocessedDataset
from proapt.numerics import mse_loss

log = logging.getLogger(__name__)

RATE_KEYS = ("accuracy", "precision_macro", "recall_macro", "f1_macro",
             "precision_weighted", "recall_weighted", "f1_weighted")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(preds, truths, n: int) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=int)
    truths = np.asarray(truths, dtype=int)
    if preds.shape != truths.shape:
        raise ValueError(f"{preds.size} predictions but {truths.size} truths")
    if preds.size and (min(preds.min(), truths.min()) < 0 or max(preds.max(), truths.max()) >= n):
        raise ValueError(f"class index outside 0..{n - 1}")
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    return ConfusionMatrix(counts)


@dataclass
class MetricsReport:
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    precision_weighted: float
    recall_weighted: float
    f1_weighted: float
    per_class: dict = field(default_factory=dict)
    mean_loss: float = float("nan")  # test-time loss
    train_loss: float = float("nan")  # final-epoch training loss
    mean_prediction_seconds: float = float("nan")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in RATE_KEYS}
        d.update(mean_loss=self.mean_loss, train_loss=self.train_loss,
                 mean_prediction_seconds=self.mean_prediction_seconds,
                 per_class=self.per_class)
        return d


def _safe_div(num, den):
    out = np.zeros_like(num, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def metrics(cm: ConfusionMatrix, names=None) -> MetricsReport:
    """Accuracy plus macro- and support-weighted precision, recall and F1.

    Per-class rates with a zero denominator count as 0.
    """
    C = cm.counts.astype(float)
    total = C.sum()
    if total == 0:
        raise ValueError("metrics of an empty confusion matrix")
    tp = np.diag(C)
    support = C.sum(axis=1)
    predicted = C.sum(axis=0)
    prec = _safe_div(tp, predicted)
    rec = _safe_div(tp, support)
    f1 = _safe_div(2 * prec * rec, prec + rec)
    undefined = np.flatnonzero((support == 0) | (predicted == 0))
    if undefined.size:
        warnings.warn(f"classes {undefined.tolist()} have no support or no predictions; "
                      "their undefined rates are set to 0", RuntimeWarning, stacklevel=2)
    w = support / total
    names = list(names) if names is not None else [str(i) for i in range(cm.n_classes)]
    per_class = {
        n: {"precision": float(p), "recall": float(r), "f1": float(f), "support": int(s)}
        for n, p, r, f, s in zip(names, prec, rec, f1, support)
    }
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        precision_macro=float(prec.mean()), recall_macro=float(rec.mean()),
        f1_macro=float(f1.mean()),
        precision_weighted=float(w @ prec), recall_weighted=float(w @ rec),
        f1_weighted=float(w @ f1),
        per_class=per_class,
    )


def mean_report(reports) -> MetricsReport:
    """Arithmetic mean of every scalar field over ``reports``."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to average")
    kw = {k: float(np.mean([getattr(r, k) for r in reports]))
          for k in RATE_KEYS + ("mean_loss", "train_loss", "mean_prediction_seconds")}
    return MetricsReport(**kw)


def held_out_loss(net, states, truths, discount: float) -> float:
    """Squared-error loss of the greedy Q-value against ``r + discount * max Q(next)``
    over a time-ordered test sequence, with the final record treated as terminal."""
    preds, Q = predict_sequence(net, states)
    rewards = (preds == truths).astype(float)
    q_t = Q[np.arange(len(preds)), preds].astype(float)
    boot = np.append(Q[1:].max(axis=1).astype(float), 0.0)
    loss, _ = mse_loss(q_t, rewards + discount * boot)
    return loss


def measure_latency(net, states, repeats: int = 3) -> float:
    """Mean wall-clock seconds per greedy prediction.

    One untimed warm-up pass runs first; then ``repeats`` timed passes over
    ``states``, each carrying its own hidden state.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    states = np.asarray(states, dtype=net.dtype)
    if states.ndim == 1:
        states = states[None, :]
    hidden = None
    for s in states:
        _, _, hidden = predict(net, s, hidden)
    per_pass = []
    for _ in range(repeats):
        hidden = None
        t0 = time.perf_counter()
        for s in states:
            _, _, hidden = predict(net, s, hidden)
        per_pass.append((time.perf_counter() - t0) / len(states))
    return float(np.mean(per_pass))


@dataclass
class FoldOutcome:
    fold: int
    report: MetricsReport
    confusion: ConfusionMatrix
    epochs: list
    predictions: np.ndarray
    truths: np.ndarray
    model: object = None
    stats: object = None


@dataclass
class CrossValidation:
    folds: list[FoldOutcome]
    mean: MetricsReport
    config: RunConfig

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "folds": [
                {"fold": f.fold, "metrics": f.report.to_dict(),
                 "confusion": f.confusion.counts.tolist(),
                 "epochs": [e.to_dict() for e in f.epochs]}
                for f in self.folds
            ],
            "mean": self.mean.to_dict(),
        }


def evaluate_network(net, states, truths, n_classes: int, discount: float,
                     names=None, latency_samples: int = 0):
    """Greedy predictions over a time-ordered test sequence and their metrics."""
    preds, _ = predict_sequence(net, states)
    cm = confusion(preds, truths, n_classes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = metrics(cm, names)
    rep.mean_loss = held_out_loss(net, states, truths, discount)
    if latency_samples:
        rep.mean_prediction_seconds = measure_latency(net, states[:latency_samples], repeats=3)
    return rep, cm, preds


def cross_validate(ds: PreprocessedDataset, config: RunConfig, folds=None, fit=None,
                   on_epoch=None, latency_samples: int = 100) -> CrossValidation:
    """Train on K-1 folds and evaluate on the held-out fold, for every fold.

    ``fit(fold_data, config, n_actions)`` may replace the default agent
    training; it must return an object with a ``pair.main`` network and an
    ``epochs`` list.
    """
    from proapt.pipeline import fit_fold, prepare_fold

    fit = fit or (lambda data, cfg, n: fit_fold(data, cfg, n, on_epoch=(
        None if on_epoch is None else (lambda s, f=data.fold: on_epoch(f, s)))))
    n = len(ds.vocab)
    outcomes = []
    for k in (range(ds.folds.k) if folds is None else folds):
        data = prepare_fold(ds, k, config)
        res = fit(data, config, n)
        net = res.pair.main
        rep, cm, preds = evaluate_network(
            net, data.test.X.astype(net.dtype), data.test.y, n, config.discount,
            ds.vocab.names, latency_samples)
        if res.epochs:
            rep.train_loss = res.epochs[-1].mean_loss
        log.info("fold %d: accuracy %.4f macro-F1 %.4f", k, rep.accuracy, rep.f1_macro)
        outcomes.append(FoldOutcome(k, rep, cm, list(res.epochs), preds, data.test.y,
                                    net, data.stats))
    return CrossValidation(outcomes, mean_report(o.report for o in outcomes), config)
