"""Run configuration: a flat YAML mapping of the keys below.

Unset keys take the defaults shown; unknown keys are rejected. ``None``
for ``memory_capacity``, ``epsilon_decrement`` and ``random_oversample_min``
means "derive from the data" (see :meth:`RunConfig.resolve`).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import yaml


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class RunConfig:
    # agent
    discount: float = 0.01
    learning_rate: float = 1e-3
    batch_size: int = 128
    memory_capacity: int | None = None
    sync_period: int = 100
    epochs: int = 10
    hidden_size: int = 64
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decrement: float | None = None
    softmax_position: str = "pre_fc"
    dtype: str = "float32"
    # data
    k_folds: int = 4
    label_in_state: bool = True
    normalize_onehot: bool = True
    oversample: bool = True
    random_oversample_classes: int = 3
    random_oversample_min: int | None = None
    smote_k: int = 6
    smote_classes: int = 7
    smote_target: str | int = "median"
    # seeds
    seed_data: int = 0
    seed_init: int = 0
    seed_agent: int = 0

    def validate(self) -> "RunConfig":
        problems = []
        if not 0.0 <= self.discount <= 1.0:
            problems.append(f"discount must lie in [0, 1], got {self.discount}")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            problems.append("need 0 <= epsilon_end <= epsilon_start <= 1")
        for name in ("learning_rate", "batch_size", "sync_period", "hidden_size",
                     "smote_k", "smote_classes", "random_oversample_classes"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("memory_capacity", "epsilon_decrement", "random_oversample_min"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                problems.append(f"{name} must be positive or null, got {v}")
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if self.k_folds < 2:
            problems.append(f"k_folds must be >= 2, got {self.k_folds}")
        if self.softmax_position not in ("pre_fc", "none"):
            problems.append(f"softmax_position must be pre_fc or none, got {self.softmax_position!r}")
        if self.dtype not in ("float32", "float64"):
            problems.append(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.smote_target != "median" and not (isinstance(self.smote_target, int) and self.smote_target > 0):
            problems.append(f"smote_target must be 'median' or a positive count, got {self.smote_target!r}")
        if problems:
            raise ConfigError(problems)
        return self

    def resolve(self, n_train: int) -> "RunConfig":
        """Fill the data-dependent defaults for a training walk of ``n_train`` records."""
        c = dataclasses.replace(self)
        if c.memory_capacity is None:
            c.memory_capacity = max(1, int(round(1.5 * n_train)))
        if c.epsilon_decrement is None:
            steps = max(1, c.epochs * n_train)
            c.epsilon_decrement = (c.epsilon_start - c.epsilon_end) / (0.5 * steps)
            if c.epsilon_decrement == 0:
                c.epsilon_decrement = 1.0
        if c.random_oversample_min is None:
            c.random_oversample_min = c.smote_k + 1
        return c

    def replace(self, **changes) -> "RunConfig":
        unknown = set(changes) - set(field_names())
        if unknown:
            raise ConfigError([f"unknown parameter {k!r}" for k in sorted(unknown)])
        return dataclasses.replace(self, **changes).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        problems = [f"unknown key {k!r}" for k in sorted(set(d) - set(field_names()))]
        types = {f.name: f.default for f in dataclasses.fields(cls)}
        good = {}
        for k, v in d.items():
            if k not in types:
                continue
            default = types[k]
            if isinstance(default, bool) and not isinstance(v, bool):
                problems.append(f"{k} must be true/false, got {v!r}")
            elif isinstance(default, float) and not isinstance(v, (int, float)):
                problems.append(f"{k} must be a number, got {v!r}")
            elif isinstance(default, int) and not isinstance(default, bool) \
                    and not (isinstance(v, int) and not isinstance(v, bool)):
                problems.append(f"{k} must be an integer, got {v!r}")
            elif default is None and not (v is None or isinstance(v, (int, float))
                                          and not isinstance(v, bool)):
                problems.append(f"{k} must be a number or null, got {v!r}")
            else:
                good[k] = float(v) if isinstance(default, float) else v
        # range checks still run on the well-typed keys so every problem is reported at once
        try:
            cfg = cls(**good).validate()
        except ConfigError as exc:
            problems.extend(exc.problems)
        if problems:
            raise ConfigError(problems)
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if data is not None and not isinstance(data, dict):
            raise ConfigError([f"{path}: expected a key-value mapping"])
        return cls.from_dict(data)


def field_names() -> list[str]:
    return [f.name for f in dataclasses.fields(RunConfig)]
