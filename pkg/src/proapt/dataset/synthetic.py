"""Seeded APT-like flow traces for tests and demos.

Attack records follow a Markov chain over the attack stages and come from
a single attacker address; normal records are interleaved at a fixed rate
and come from a pool of benign hosts that only ever produce normal
traffic. With that arrangement the next-step labelling rules recover the
chain exactly: an attack record's next step is the next stage drawn, a
normal record's next step is Normal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from proapt.dataset.records import FlowRecord, Schema

APT_STAGES = (
    "Reconnaissance",
    "Establish Foothold",
    "Lateral Movement",
    "Internal Reconnaissance",
    "Data Exfiltration",
    "Cover Up",
)
FEATURES = ("flow_duration", "total_bytes", "packet_count", "mean_iat")


def chain_matrix(n: int) -> np.ndarray:
    """Deterministic cycle: stage i always moves to stage i+1 (mod n)."""
    return np.roll(np.eye(n), 1, axis=1)


@dataclass
class SyntheticConfig:
    stages: tuple[str, ...] = APT_STAGES
    transition: np.ndarray | None = None  # row-stochastic over stages; None = chain
    normal_label: str = "Normal"
    normal_fraction: float = 0.8
    n_hosts: int = 20
    attacker_ip: str = "10.0.0.66"
    start: datetime = field(default_factory=lambda: datetime(2019, 7, 8, 9, 0, 0, tzinfo=timezone.utc))
    max_gap_seconds: int = 3
    noise: float = 0.5

    def matrix(self) -> np.ndarray:
        P = chain_matrix(len(self.stages)) if self.transition is None else np.asarray(self.transition, float)
        n = len(self.stages)
        if P.shape != (n, n):
            raise ValueError(f"transition matrix must be {n}x{n}, got {P.shape}")
        if (P < 0).any() or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition matrix must be row-stochastic")
        return P


def _stage_means(n_labels: int) -> np.ndarray:
    # distinct, well separated per-label centres for each feature
    base = np.array([1.0, 2.0, 1.5, 0.5])
    step = np.array([1.5, 1.0, 2.0, 0.75])
    return base + np.arange(n_labels)[:, None] * step


def generate_synthetic_apt(config: SyntheticConfig | None, n: int, seed: int) -> list[FlowRecord]:
    config = config or SyntheticConfig()
    P = config.matrix()
    if not 0.0 <= config.normal_fraction <= 1.0:
        raise ValueError("normal_fraction must be within [0, 1]")
    rng = np.random.default_rng(seed)
    labels = (config.normal_label,) + tuple(config.stages)
    means = _stage_means(len(labels))
    hosts = [f"192.168.1.{10 + h}" for h in range(config.n_hosts)]
    stage = 0
    t = config.start
    out = []
    first_attack = True
    for _ in range(n):
        t = t + timedelta(seconds=int(rng.integers(1, config.max_gap_seconds + 1)))
        if rng.random() < config.normal_fraction:
            li = 0
            src = hosts[int(rng.integers(len(hosts)))]
            dst = "172.16.0.5"
            sport = int(rng.integers(49152, 65536))
            dport = (80, 443, 53)[int(rng.integers(3))]
        else:
            if not first_attack:
                stage = int(rng.choice(len(config.stages), p=P[stage]))
            first_attack = False
            li = 1 + stage
            src = config.attacker_ip
            dst = f"192.168.1.{200 + stage}"
            sport = int(rng.integers(49152, 65536))
            dport = 1000 + 11 * stage
        feats = means[li] + config.noise * rng.standard_normal(len(FEATURES))
        out.append(FlowRecord(
            time=t, src_ip=src, dst_ip=dst, src_port=sport, dst_port=dport,
            features={f: float(v) for f, v in zip(FEATURES, feats)},
            activity_label=labels[li],
        ))
    return out


def synthetic_schema() -> Schema:
    cols = {"Timestamp": "timestamp", "Src IP": "src_ip", "Dst IP": "dst_ip",
            "Src Port": "src_port", "Dst Port": "dst_port"}
    cols.update({f: "feature" for f in FEATURES})
    cols["Activity"] = "label"
    return Schema(cols)
