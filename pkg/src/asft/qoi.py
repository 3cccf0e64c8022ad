"""Downstream-task harness: design sets, decoding, dedup, top-fraction QoI.

A design set Q is decoded either by the PTM alone or by M models sampled
from a subspace distribution (each model gets a contiguous block of Q).
Invalid decodes are discarded, duplicates collapse on the canonical string,
and the QoI is the mean property of the top fraction (sign-flipped for
minimized properties so the QoI is always maximized).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import toygen
from .errors import DegenerateEvaluationError, EmptyInputError
from .numkit import SeededRng
from .posterior import SubspaceGaussian, models_from_omegas, sample_models
from .subspace import ActiveSubspace


@dataclass(frozen=True, eq=False)
class DesignSet:
    points: np.ndarray  # (N, d_z)
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("points must be a nonempty (N, d_z) array")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")

    @property
    def n(self) -> int:
        return int(self.points.shape[0])


def generate_design_set(d_z: int, n: int, seed: int) -> DesignSet:
    """N i.i.d. standard-normal latent points; deterministic per seed."""
    gen = SeededRng(seed).generator()
    return DesignSet(gen.standard_normal((n, d_z)), seed)


@dataclass(frozen=True)
class QoIConfig:
    property_name: str = "toy-logp"
    direction: str = ""  # defaults to minimize for toy-sas, else maximize
    top_fraction: float = 0.10
    m_models: int = 10

    def __post_init__(self):
        if self.property_name not in toygen.PROPERTIES:
            raise ValueError(f"unknown property {self.property_name!r}")
        if not self.direction:
            object.__setattr__(
                self,
                "direction",
                "minimize" if self.property_name == "toy-sas" else "maximize",
            )
        if self.direction not in ("maximize", "minimize"):
            raise ValueError(f"bad direction {self.direction!r}")
        if not 0 < self.top_fraction <= 1:
            raise ValueError("top_fraction must be in (0, 1]")
        if self.m_models < 1:
            raise ValueError("m_models must be >= 1")


@dataclass(frozen=True)
class DesignRecord:
    canonical: str
    value: float
    source_model: int


@dataclass
class QoIReport:
    qoi: float
    unique_count: int
    valid_count: int
    invalid_count: int
    records: list[DesignRecord]
    config: QoIConfig

    def to_json_dict(self) -> dict:
        return {
            "qoi": self.qoi,
            "unique_count": self.unique_count,
            "valid_count": self.valid_count,
            "invalid_count": self.invalid_count,
            "config": {
                "property": self.config.property_name,
                "direction": self.config.direction,
                "top_fraction": self.config.top_fraction,
                "m_models": self.config.m_models,
            },
            "records": [
                {"canonical": r.canonical, "property": r.value, "source_model": r.source_model}
                for r in self.records
            ],
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
            fh.write("\n")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["canonical", "property", "source_model"])
            for r in self.records:
                writer.writerow([r.canonical, repr(r.value), r.source_model])


def top_fraction_stat(values, frac: float, direction: str = "maximize") -> float:
    """Mean of the ceil(frac*len) best values; negated mean of the worst for
    minimize, so the returned statistic is always to be maximized."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInputError("top_fraction_stat of an empty list")
    m = math.ceil(frac * values.size)
    ordered = np.sort(values)
    if direction == "maximize":
        return float(np.mean(ordered[-m:]))
    if direction == "minimize":
        return float(-np.mean(ordered[:m]))
    raise ValueError(f"bad direction {direction!r}")


def partition_blocks(n: int, m: int) -> list[slice]:
    """Contiguous blocks of sizes n//m (+1 for the first n%m blocks)."""
    base, rem = divmod(n, m)
    slices = []
    start = 0
    for i in range(m):
        size = base + (1 if i < rem else 0)
        slices.append(slice(start, start + size))
        start += size
    return slices


def _assemble_report(
    decoded: list[tuple[toygen.ToySequence, int]], cfg: QoIConfig
) -> QoIReport:
    valid = invalid = 0
    records: list[DesignRecord] = []
    seen: set[str] = set()
    for seq, source in decoded:
        if toygen.validate(seq):
            valid += 1
            canon = seq.canonical
            if canon not in seen:
                seen.add(canon)
                records.append(
                    DesignRecord(canon, toygen.property_value(seq, cfg.property_name), source)
                )
        else:
            invalid += 1
    if not records:
        raise DegenerateEvaluationError("no valid unique designs decoded")
    qoi = top_fraction_stat([r.value for r in records], cfg.top_fraction, cfg.direction)
    return QoIReport(qoi, len(records), valid, invalid, records, cfg)


def evaluate_ptm_qoi(model: toygen.ToyVae, design: DesignSet, cfg: QoIConfig) -> QoIReport:
    """Decode every design point with the pre-trained model."""
    seqs = toygen.decode_batch(model, design.points)
    return _assemble_report([(s, 0) for s in seqs], cfg)


def evaluate_dist_qoi(
    model: toygen.ToyVae,
    sub: ActiveSubspace,
    dist: SubspaceGaussian,
    design: DesignSet,
    cfg: QoIConfig,
    rng: SeededRng,
    omegas: np.ndarray | None = None,
) -> QoIReport:
    """Sample M models from ``dist`` and give each a contiguous block of Q.

    Pre-drawn ``omegas`` (M, k) may be supplied (the REINFORCE path reuses
    its policy samples); otherwise M models are drawn from ``dist``.
    """
    if omegas is None:
        models = sample_models(model, sub, dist, cfg.m_models, rng)
    else:
        models = models_from_omegas(model, sub, omegas)
    decoded: list[tuple[toygen.ToySequence, int]] = []
    for i, (values, block) in enumerate(zip(models, partition_blocks(design.n, len(models)))):
        pts = design.points[block]
        if pts.shape[0] == 0:
            continue
        for s in toygen.decode_batch(model, pts, values=values):
            decoded.append((s, i))
    return _assemble_report(decoded, cfg)


@dataclass
class QoiObjective:
    """Callable handed to the optimizers: candidate distribution -> QoI.

    Each call uses its own derived random stream (stream = call index), or
    stream 0 for every call under common random numbers.
    """

    model: toygen.ToyVae
    sub: ActiveSubspace
    design: DesignSet
    cfg: QoIConfig
    seed: int = 0
    common_random_numbers: bool = False
    calls: int = field(default=0, init=False)
    last_report: QoIReport | None = field(default=None, init=False)

    def __call__(self, cand: SubspaceGaussian, omegas: np.ndarray | None = None) -> float:
        stream = 0 if self.common_random_numbers else self.calls
        self.calls += 1
        rng = SeededRng(self.seed, stream)
        report = evaluate_dist_qoi(
            self.model, self.sub, cand, self.design, self.cfg, rng, omegas=omegas
        )
        self.last_report = report
        return report.qoi
