"""``proapt`` command line: synth, preprocess, train, evaluate, predict, sweep.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from proapt.agent import predict_sequence
from proapt.config import ConfigError, RunConfig
from proapt.dataset import (
    EncodingError,
    FeatureLayout,
    PreprocessedDataset,
    SchemaError,
    SyntheticConfig,
    clean_labels,
    encode_record,
    generate_synthetic_apt,
    load_flows,
    load_schema,
    preprocess_records,
    synthetic_schema,
    write_flows_csv,
    zscore_apply,
)
from proapt.evaluation import cross_validate, evaluate_network, mean_report
from proapt.model import CheckpointError, load_checkpoint, save_checkpoint
from proapt.pipeline import fit_fold, prepare_fold

log = logging.getLogger("proapt")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_RUNTIME = 0, 2, 3, 4
FIXED_CLOCK = "1970-01-01T00:00:00Z"


class ValidationError(ValueError):
    pass


class Clock:
    def __init__(self, fixed: bool):
        self.fixed = fixed

    def now(self) -> str:
        if self.fixed:
            return FIXED_CLOCK
        return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _require_distinct(inputs, out: Path) -> None:
    out = out.resolve()
    for p in inputs:
        if p is not None and Path(p).resolve() == out:
            raise ValidationError(f"{p} is both an input and the output path")


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for name in ("seed_data", "seed_init", "seed_agent"):
        v = getattr(args, name)
        if v is not None:
            overrides[name] = v
    return cfg.replace(**overrides) if overrides else cfg


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args, cfg: RunConfig, clock: Clock) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scfg = SyntheticConfig(normal_fraction=args.normal_fraction)
    records = generate_synthetic_apt(scfg, args.n, cfg.seed_data)
    schema = synthetic_schema()
    write_flows_csv(records, out / "flows.csv", schema)
    (out / "schema.yaml").write_text(yaml.safe_dump(schema.to_dict(), sort_keys=False))
    log.info("wrote %d synthetic records to %s", len(records), out / "flows.csv")


def cmd_preprocess(args, cfg: RunConfig, clock: Clock) -> None:
    out = Path(args.out)
    _require_distinct([args.input, args.schema], out)
    schema = load_schema(args.schema)
    rejects: list = []
    records = load_flows(args.input, schema, rejects)
    ds = preprocess_records(records, schema, cfg.k_folds, cfg.seed_data, cfg.label_in_state)
    ds.info["rejected_rows"] = [{"line": ln, "reason": why} for ln, why in rejects]
    ds.save(out, cfg.normalize_onehot)
    log.info("preprocessed %d rows -> %d (removed %d, rejected %d)", len(records) + len(rejects),
             ds.info["rows"], ds.info["removed_rows"], len(rejects))


def cmd_train(args, cfg: RunConfig, clock: Clock) -> None:
    out = Path(args.out)
    _require_distinct([args.dataset], out)
    ds = PreprocessedDataset.load(args.dataset)
    out.mkdir(parents=True, exist_ok=True)
    folds = range(ds.folds.k) if args.fold is None else [args.fold]
    summary = {"config": cfg.to_dict(), "folds": []}
    with open(out / "run_log.jsonl", "w") as logf:
        for k in folds:
            data = prepare_fold(ds, k, cfg)

            def on_epoch(s, k=k):
                rec = {"time": clock.now(), "fold": k, **s.to_dict()}
                logf.write(json.dumps(rec, sort_keys=True) + "\n")
                logf.flush()

            res = fit_fold(data, cfg, len(ds.vocab), on_epoch=on_epoch)
            ckpt = out / f"fold_{k}.ckpt"
            save_checkpoint(res.pair.main, data.stats, ds.vocab, ckpt)
            summary["folds"].append({
                "fold": k, "checkpoint": ckpt.name, "train_records": len(data.train),
                "checksum": res.pair.main.checksum(),
                "epochs": [e.to_dict() for e in res.epochs],
            })
    _dump_json(summary, out / "train_summary.json")


def _checkpoints(path: Path, fold):
    if path.is_dir():
        found = sorted(path.glob("fold_*.ckpt"), key=lambda p: int(p.stem.split("_")[1]))
        if fold is not None:
            found = [p for p in found if int(p.stem.split("_")[1]) == fold]
        if not found:
            raise FileNotFoundError(f"no fold checkpoints in {path}")
        return [(int(p.stem.split("_")[1]), p) for p in found]
    if fold is None:
        stem = path.stem
        if not stem.startswith("fold_"):
            raise ValidationError("--fold is required for a checkpoint not named fold_<k>.ckpt")
        fold = int(stem.split("_")[1])
    return [(fold, path)]


def _split_indices(ds: PreprocessedDataset, fold: int, split: str) -> np.ndarray:
    tr, te = ds.folds.train_test(fold)
    return {"test": te, "train": tr, "all": np.arange(len(ds.y))}[split]


def cmd_evaluate(args, cfg: RunConfig, clock: Clock) -> None:
    out = Path(args.out)
    _require_distinct([args.dataset, args.checkpoint], out)
    ds = PreprocessedDataset.load(args.dataset)
    out.mkdir(parents=True, exist_ok=True)
    report = {"config": cfg.to_dict(), "split": args.split, "folds": []}
    ckpt_path = Path(args.checkpoint)
    train_summary = (ckpt_path if ckpt_path.is_dir() else ckpt_path.parent) / "train_summary.json"
    if train_summary.exists():
        report["train_config"] = json.loads(train_summary.read_text())["config"]
    rows = []
    per_fold = []
    for k, path in _checkpoints(ckpt_path, args.fold):
        net, stats, vocab = load_checkpoint(path, cfg.softmax_position)
        if vocab != ds.vocab:
            raise ValidationError(f"{path}: vocabulary {list(vocab)} != dataset {list(ds.vocab)}")
        if net.input_size != ds.layout.width:
            raise ValidationError(
                f"{path}: network expects {net.input_size} inputs, dataset rows have {ds.layout.width}"
            )
        idx = _split_indices(ds, k, args.split)
        idx = idx[np.argsort(ds.times[idx], kind="stable")]
        X = zscore_apply(ds.X[idx], stats).astype(net.dtype)
        rep, cm, preds = evaluate_network(net, X, ds.y[idx], len(vocab), cfg.discount,
                                          vocab.names)
        per_fold.append(rep)
        report["folds"].append({"fold": k, "checkpoint": path.name, "records": int(idx.size),
                                "metrics": rep.to_dict(), "confusion": cm.counts.tolist()})
        rows.extend((k, int(i), vocab.names[p], vocab.names[t])
                    for i, p, t in zip(idx, preds, ds.y[idx]))
    report["mean"] = mean_report(per_fold).to_dict()
    _dump_json(report, out / "report.json")
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "row", "predicted", "actual"])
        w.writerows(rows)
    m = report["mean"]
    log.info("accuracy %.4f  f1_macro %.4f  f1_weighted %.4f", m["accuracy"], m["f1_macro"],
             m["f1_weighted"])


def cmd_predict(args, cfg: RunConfig, clock: Clock) -> None:
    out = Path(args.out)
    _require_distinct([args.input, args.checkpoint, args.dataset], out)
    net, stats, vocab = load_checkpoint(args.checkpoint, cfg.softmax_position)
    sidecar = PreprocessedDataset.load(args.dataset) if args.dataset else None
    if args.schema:
        schema = load_schema(args.schema)
    elif sidecar is not None and sidecar.schema is not None:
        schema = sidecar.schema
    else:
        raise ValidationError("predict needs --schema or a --dataset whose sidecar records one")
    if sidecar is not None:
        layout = sidecar.layout
    else:
        layout = FeatureLayout(tuple(schema.feature_names), vocab, cfg.label_in_state)
    if layout.vocab != vocab:
        raise ValidationError("checkpoint vocabulary does not match the dataset layout")
    if layout.width != net.input_size:
        raise ValidationError(f"layout width {layout.width} != network input {net.input_size}")
    records = clean_labels(load_flows(args.input, schema), schema.normal_label)
    records = sorted(records, key=lambda r: r.time)  # stable: ties keep file order
    encoded, kept = [], []
    for r in records:
        try:
            encoded.append(encode_record(r, vocab, layout.feature_names, layout.label_in_state))
            kept.append(r)
        except EncodingError as exc:
            log.warning("line %d skipped: %s", r.line, exc)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line", "time", "src_ip", "predicted"] + [f"q[{n}]" for n in vocab.names])
        if encoded:
            X = zscore_apply(np.array(encoded), stats).astype(net.dtype)
            preds, Q = predict_sequence(net, X)
            for r, p, q in zip(kept, preds, Q):
                w.writerow([r.line, r.time.strftime(schema.time_format), r.src_ip,
                            vocab.names[p]] + [repr(float(v)) for v in q])
    log.info("predicted %d rows", len(encoded))


def sweep_configs(base: RunConfig, plan: dict) -> list[tuple[dict, RunConfig]]:
    """Expand a sweep plan into ``(changes, config)`` pairs.

    ``plan = {"mode": "cartesian" | "axis", "params": {name: [values, ...]}}``.
    Axis mode varies one parameter at a time around ``base``.
    """
    unknown = set(plan) - {"mode", "params", "folds"}
    if unknown:
        raise ValidationError(f"unknown sweep keys {sorted(unknown)}")
    mode = plan.get("mode", "cartesian")
    params = plan.get("params") or {}
    if mode not in ("cartesian", "axis"):
        raise ValidationError(f"sweep mode must be cartesian or axis, got {mode!r}")
    if not params:
        raise ValidationError("sweep plan lists no parameters")
    valid = set(RunConfig.__dataclass_fields__)
    bad = sorted(set(params) - valid)
    if bad:
        raise ValidationError(f"unknown sweep parameters {bad}")
    if mode == "cartesian":
        names = list(params)
        combos = [dict(zip(names, vals)) for vals in itertools.product(*(params[n] for n in names))]
    else:
        combos = [{n: v} for n, vals in params.items() for v in vals]
    return [(c, base.replace(**c)) for c in combos]


def cmd_sweep(args, cfg: RunConfig, clock: Clock) -> None:
    out = Path(args.out)
    _require_distinct([args.dataset, args.sweep], out)
    with open(args.sweep) as fh:
        plan = yaml.safe_load(fh) or {}
    runs = sweep_configs(cfg, plan)
    ds = PreprocessedDataset.load(args.dataset)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (changes, c) in enumerate(runs):
        cv = cross_validate(ds, c, folds=plan.get("folds"))
        rdir = out / f"config_{i:03d}"
        rdir.mkdir(exist_ok=True)
        _dump_json({"changes": changes, **cv.to_dict()}, rdir / "report.json")
        m = cv.mean
        rows.append({"config": rdir.name, **{k: changes[k] for k in changes},
                     "accuracy": m.accuracy, "f1_macro": m.f1_macro,
                     "f1_weighted": m.f1_weighted, "precision_macro": m.precision_macro,
                     "recall_macro": m.recall_macro, "mean_loss": m.mean_loss})
        log.info("sweep %s %s: f1_macro %.4f", rdir.name, changes, m.f1_macro)
    rows.sort(key=lambda r: (-r["f1_macro"], r["config"]))
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (YAML key-value file)")
    common.add_argument("--seed-data", dest="seed_data", type=int)
    common.add_argument("--seed-init", dest="seed_init", type=int)
    common.add_argument("--seed-agent", dest="seed_agent", type=int)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--fixed-clock", action="store_true",
                        help="freeze log timestamps for byte-exact reruns")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="proapt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic APT flow trace")
    s.add_argument("--n", type=int, default=10000)
    s.add_argument("--normal-fraction", type=float, default=0.8)

    s = sub.add_parser("preprocess", parents=[common], help="clean, label, encode and fold a CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--schema", required=True)

    s = sub.add_parser("train", parents=[common], help="train one agent per fold")
    s.add_argument("--dataset", required=True)
    s.add_argument("--fold", type=int)

    s = sub.add_parser("evaluate", parents=[common], help="score fold checkpoints")
    s.add_argument("--dataset", required=True)
    s.add_argument("--checkpoint", required=True, help="checkpoint file or train output dir")
    s.add_argument("--fold", type=int)
    s.add_argument("--split", choices=("test", "train", "all"), default="test")

    s = sub.add_parser("predict", parents=[common], help="predict next steps for raw flows")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--dataset", help="preprocessed dataset dir whose sidecar holds the layout")
    s.add_argument("--schema")

    s = sub.add_parser("sweep", parents=[common], help="hyperparameter sweep")
    s.add_argument("--dataset", required=True)
    s.add_argument("--sweep", required=True, help="sweep plan (YAML)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        COMMANDS[args.command](args, cfg, Clock(args.fixed_clock))
    except (ConfigError, SchemaError, EncodingError, ValidationError) as exc:
        print(f"proapt: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, CheckpointError) as exc:
        print(f"proapt: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        print(f"proapt: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
