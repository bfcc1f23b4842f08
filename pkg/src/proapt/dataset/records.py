"""Flow records: CSV ingestion, label cleaning and next-step labelling."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import yaml

log = logging.getLogger(__name__)

ROLES = ("timestamp", "src_ip", "dst_ip", "src_port", "dst_port", "label", "feature", "ignore")
REQUIRED_ROLES = ("timestamp", "src_ip", "dst_ip", "src_port", "dst_port", "label")
DEFAULT_TIME_FORMAT = "%Y-%m-%d %H:%M:%S"


class SchemaError(ValueError):
    pass


class RowWarning(UserWarning):
    """A CSV row was rejected and dropped."""


@dataclass
class FlowRecord:
    time: datetime
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    features: dict[str, float]
    activity_label: str
    next_step_label: str | None = None
    line: int = 0

    @property
    def unix_time(self) -> int:
        return int(self.time.timestamp())


@dataclass
class Schema:
    """Column-name to role mapping plus parsing options.

    Feature columns are encoded in the order they appear in ``columns``.
    Columns absent from the mapping are ignored.
    """

    columns: dict[str, str]
    time_format: str = DEFAULT_TIME_FORMAT
    normal_label: str = "Normal"
    label_order: list[str] | None = None

    def __post_init__(self):
        bad = {c: r for c, r in self.columns.items() if r not in ROLES}
        if bad:
            raise SchemaError(f"unknown roles {bad}; valid roles are {ROLES}")
        for role in REQUIRED_ROLES:
            n = sum(r == role for r in self.columns.values())
            if n != 1:
                raise SchemaError(f"schema must name exactly one {role!r} column, found {n}")

    def column(self, role: str) -> str:
        return next(c for c, r in self.columns.items() if r == role)

    @property
    def feature_names(self) -> list[str]:
        return [c for c, r in self.columns.items() if r == "feature"]

    def to_dict(self) -> dict:
        d = {"columns": dict(self.columns), "time_format": self.time_format,
             "normal_label": self.normal_label}
        if self.label_order is not None:
            d["label_order"] = list(self.label_order)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        if not isinstance(d, dict) or "columns" not in d:
            raise SchemaError("schema needs a 'columns' mapping")
        known = {"columns", "time_format", "normal_label", "label_order"}
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown schema keys {sorted(unknown)}")
        return cls(
            columns={str(k): str(v) for k, v in d["columns"].items()},
            time_format=d.get("time_format", DEFAULT_TIME_FORMAT),
            normal_label=d.get("normal_label", "Normal"),
            label_order=d.get("label_order"),
        )


def load_schema(path) -> Schema:
    with open(path) as fh:
        return Schema.from_dict(yaml.safe_load(fh))


def parse_ip(s: str) -> tuple[int, int, int, int]:
    parts = s.strip().split(".")
    if len(parts) != 4:
        raise ValueError(f"IP {s!r} does not have 4 octets")
    octets = tuple(int(p) for p in parts)
    if any(not 0 <= o <= 255 for o in octets):
        raise ValueError(f"IP {s!r} has an octet outside 0-255")
    return octets


def parse_time(s: str, fmt: str = DEFAULT_TIME_FORMAT) -> datetime:
    """Parse a timestamp as UTC."""
    return datetime.strptime(s.strip(), fmt).replace(tzinfo=timezone.utc)


def _parse_port(s: str) -> int:
    p = int(float(s))
    if not 0 <= p <= 65535:
        raise ValueError(f"port {s!r} outside 0-65535")
    return p


def load_flows(path, schema: Schema, rejects: list | None = None) -> list[FlowRecord]:
    """Read flow records from a CSV with a header row.

    Malformed rows are dropped with a :class:`RowWarning`; if ``rejects`` is
    given, ``(line_number, reason)`` pairs are appended to it.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: columns {missing} named in schema are missing from header")
        col = {role: schema.column(role) for role in REQUIRED_ROLES}
        feats = schema.feature_names
        out = []
        for row in reader:
            line = reader.line_num
            try:
                parse_ip(row[col["src_ip"]])
                parse_ip(row[col["dst_ip"]])
                label = (row[col["label"]] or "").strip()
                if not label:
                    raise ValueError("empty label")
                rec = FlowRecord(
                    time=parse_time(row[col["timestamp"]], schema.time_format),
                    src_ip=row[col["src_ip"]].strip(),
                    dst_ip=row[col["dst_ip"]].strip(),
                    src_port=_parse_port(row[col["src_port"]]),
                    dst_port=_parse_port(row[col["dst_port"]]),
                    features={f: float(row[f]) for f in feats},
                    activity_label=label,
                    line=line,
                )
                bad = [f for f, v in rec.features.items() if v != v or abs(v) == float("inf")]
                if bad:
                    raise ValueError(f"non-finite feature values in {bad}")
            except (ValueError, TypeError, AttributeError) as exc:
                msg = f"{path}:{line}: dropped row ({exc})"
                warnings.warn(msg, RowWarning, stacklevel=2)
                log.warning(msg)
                if rejects is not None:
                    rejects.append((line, str(exc)))
                continue
            out.append(rec)
    return out


def clean_labels(records, normal_label: str = "Normal") -> list[FlowRecord]:
    """Map every ``Benign`` label (any case) onto ``normal_label``."""
    return [
        replace(r, activity_label=normal_label) if r.activity_label.lower() == "benign" else r
        for r in records
    ]


def derive_next_step_labels(records, normal_label: str = "Normal") -> list[FlowRecord]:
    """Attach next-step labels and drop records that have none.

    Records are ordered by ``(time, input position)``. A normal record takes
    the label of the next record from the same source IP; an attack record
    takes the label of the next attack record from any source. Survivors are
    returned in input order.
    """
    n = len(records)
    order = sorted(range(n), key=lambda i: (records[i].time, i))
    next_label: list[str | None] = [None] * n
    next_attack: str | None = None
    next_by_src: dict[str, str] = {}
    for i in reversed(order):
        r = records[i]
        if r.activity_label == normal_label:
            next_label[i] = next_by_src.get(r.src_ip)
        else:
            next_label[i] = next_attack
            next_attack = r.activity_label
        next_by_src[r.src_ip] = r.activity_label
    return [
        replace(r, next_step_label=lab)
        for r, lab in zip(records, next_label)
        if lab is not None
    ]


def write_flows_csv(records, path, schema: Schema) -> None:
    """Write records back out in ``schema``'s column layout."""
    names = list(schema.columns)
    role = schema.columns
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in records:
            row = []
            for c in names:
                k = role[c]
                if k == "timestamp":
                    row.append(r.time.strftime(schema.time_format))
                elif k in ("src_ip", "dst_ip", "src_port", "dst_port"):
                    row.append(getattr(r, k))
                elif k == "label":
                    row.append(r.activity_label)
                elif k == "feature":
                    row.append(repr(float(r.features[c])))
                else:
                    row.append("")
            w.writerow(row)
