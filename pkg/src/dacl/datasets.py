"""Feature CSV I/O, patient-disjoint splits and a two-cluster synthetic generator.

CSV layout: header ``record_id,patient_id,label,f0,...,f{D-1}``. Labels use the
PhysioNet 2017 class letters: ``N`` is normal, ``A`` (atrial fibrillation) and
``O`` (other rhythm) are anomalies; ``AF`` is accepted for ``A``. The noisy class ``~`` is rejected.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .numkit import Rng, gaussian_sample

NORMAL, ANOMALY = 0, 1
LABEL_CODES = {"N": NORMAL, "A": ANOMALY, "AF": ANOMALY, "O": ANOMALY, "normal": NORMAL, "anomaly": ANOMALY}


@dataclass(frozen=True)
class FeatureRecord:
    record_id: str
    patient_id: str
    label: int
    features: tuple[float, ...]


def parse_label(cell: str, line: int) -> int:
    cell = cell.strip()
    if cell == "~":
        raise ParseError("label '~' (noisy recording) is not part of the normal/anomaly task; "
                         "drop these rows before training", line)
    try:
        return LABEL_CODES[cell]
    except KeyError:
        raise ParseError(f"unknown label {cell!r}; expected one of N, A, AF, O", line) from None


def load_features(path) -> list[FeatureRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature file not found: {path}")
    records = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if [h.strip() for h in header[:3]] != ["record_id", "patient_id", "label"] or len(header) < 4:
            raise ParseError("header must start with record_id,patient_id,label followed by feature columns", 1)
        dim = len(header) - 3
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 3:
                raise ParseError(f"expected {dim + 3} cells, found {len(row)}", line)
            try:
                feats = tuple(float(c) for c in row[3:])
            except ValueError as exc:
                raise ParseError(f"non-numeric feature: {exc}", line) from None
            if not all(math.isfinite(v) for v in feats):
                raise ParseError("non-finite feature value", line)
            records.append(FeatureRecord(row[0], row[1], parse_label(row[2], line), feats))
    if not records:
        raise DataError(f"{path}: no records")
    return records


def write_features(records: list[FeatureRecord], path) -> None:
    dim = len(records[0].features)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "patient_id", "label", *(f"f{i}" for i in range(dim))])
        for r in records:
            w.writerow([r.record_id, r.patient_id, "A" if r.label == ANOMALY else "N",
                        *(format(v, ".17g") for v in r.features)])


def as_arrays(records: list[FeatureRecord]) -> tuple[np.ndarray, np.ndarray]:
    return (np.array([r.features for r in records], dtype=np.float64),
            np.array([r.label for r in records], dtype=np.int64))


@dataclass
class SplitManifest:
    train_patients: list[str]
    test_patients: list[str]
    seed: int
    fraction: float

    def select(self, records: list[FeatureRecord]) -> tuple[list[FeatureRecord], list[FeatureRecord]]:
        train, test = set(self.train_patients), set(self.test_patients)
        unknown = {r.patient_id for r in records} - train - test
        if unknown:
            raise DataError(f"{len(unknown)} patients are not in the split manifest, e.g. {sorted(unknown)[0]}")
        return ([r for r in records if r.patient_id in train], [r for r in records if r.patient_id in test])

    def to_dict(self) -> dict:
        return {"train_patients": self.train_patients, "test_patients": self.test_patients,
                "seed": self.seed, "fraction": self.fraction}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(list(d["train_patients"]), list(d["test_patients"]), int(d["seed"]), float(d["fraction"]))


def split_by_patient(records: list[FeatureRecord], fraction: float = 0.7, seed: int = 0) -> SplitManifest:
    """Shuffle patients and send the first ceil(fraction * P) to train."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    patients = sorted({r.patient_id for r in records})
    if len(patients) < 2:
        raise DataError("patient split needs at least 2 patients")
    if len({r.label for r in records}) < 2:
        raise DataError("dataset must contain both normal and anomaly records")
    order = Rng(seed, stream=1).permutation(len(patients))
    shuffled = [patients[i] for i in order]
    n_train = min(len(patients) - 1, math.ceil(round(fraction * len(patients), 9)))
    return SplitManifest(shuffled[:n_train], shuffled[n_train:], seed, fraction)


@dataclass
class SyntheticSpec:
    per_class: int = 500
    dim: int = 64
    separation: float = 4.0
    spread: float = 1.0
    patients_per_class: int = 50
    seed: int = 0

    def validate(self) -> "SyntheticSpec":
        for name in ("per_class", "dim", "patients_per_class"):
            if getattr(self, name) < 1:
                raise ConfigError(f"synthetic.{name} must be >= 1, got {getattr(self, name)}")
        if not self.spread > 0:
            raise ConfigError(f"synthetic.spread must be > 0, got {self.spread}")
        if self.separation < 0:
            raise ConfigError(f"synthetic.separation must be >= 0, got {self.separation}")
        return self


def generate_synthetic(spec: SyntheticSpec) -> list[FeatureRecord]:
    """Two isotropic Gaussian clusters whose means sit ``separation`` apart
    along a random unit direction; records go round-robin to per-class patients."""
    spec.validate()
    rng = Rng(spec.seed, stream=2)
    u = gaussian_sample(rng, 1, spec.dim)[0]
    u /= np.linalg.norm(u)
    records = []
    for label, prefix, sign in ((NORMAL, "N", -0.5), (ANOMALY, "A", 0.5)):
        x = sign * spec.separation * u + spec.spread * gaussian_sample(rng, spec.per_class, spec.dim)
        for i, row in enumerate(x):
            pid = f"{prefix}p{i % spec.patients_per_class:04d}"
            records.append(FeatureRecord(f"{prefix}{i:05d}", pid, label, tuple(row.tolist())))
    return records
