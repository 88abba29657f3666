"""Flow-file ingestion and the preprocessing chain.

Every transform returns a new :class:`Dataset` and appends a line to its
provenance, so a container written at the end of preprocessing records how
it was made.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import IngestionError, ValidationError

log = logging.getLogger(__name__)

BENIGN = "BENIGN"

# Attack grouping used for the evolvability experiment.  The source names six
# groups before Bot while claiming seven; Bot is kept as its own group.
DEFAULT_GROUPING = {
    "BENIGN": "BENIGN",
    "DoS Hulk": "(D)DoS",
    "DDoS": "(D)DoS",
    "DoS GoldenEye": "(D)DoS",
    "DoS slowloris": "(D)DoS",
    "DoS Slowhttptest": "(D)DoS",
    "PortScan": "PortScan",
    "FTP-Patator": "Brute Force",
    "SSH-Patator": "Brute Force",
    "Web Attack – Brute Force": "Web Attacks",
    "Web Attack – XSS": "Web Attacks",
    "Web Attack – Sql Injection": "Web Attacks",
    "Bot": "Bot",
    "Infiltration": "Infiltration",
    "Heartbleed": "Heartbleed",
}


@dataclass(frozen=True)
class FlowRecord:
    features: np.ndarray
    label: str


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {self.features.shape}")
        self.labels = np.asarray(self.labels, dtype=object)
        if self.labels.shape != (len(self.features),):
            raise ValidationError("one label per feature row required")
        if not self.feature_names:
            self.feature_names = tuple(f"f{i}" for i in range(self.features.shape[1]))
        self.feature_names = tuple(self.feature_names)
        if len(self.feature_names) != self.features.shape[1]:
            raise ValidationError("feature_names length does not match feature count")
        self.provenance = tuple(self.provenance)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def label_counts(self) -> dict[str, int]:
        """Counts per label in order of first appearance."""
        return dict(Counter(self.labels.tolist()))

    @property
    def records(self) -> list[FlowRecord]:
        return [FlowRecord(f, lab) for f, lab in zip(self.features, self.labels)]

    def subset(self, index, note: str | None = None) -> "Dataset":
        prov = self.provenance + ((note,) if note else ())
        return Dataset(self.features[index], self.labels[index], self.feature_names, prov)

    def with_note(self, note: str) -> "Dataset":
        return Dataset(self.features, self.labels, self.feature_names, self.provenance + (note,))

    def equals(self, other: "Dataset") -> bool:
        return (self.feature_names == other.feature_names
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features, equal_nan=True)
                and self.labels.tolist() == other.labels.tolist())


def concat(datasets: Sequence[Dataset], note: str = "concat") -> Dataset:
    if not datasets:
        raise ValidationError("nothing to concatenate")
    names = datasets[0].feature_names
    for ds in datasets[1:]:
        if ds.feature_names != names:
            raise ValidationError("cannot concatenate datasets with different features")
    return Dataset(np.concatenate([d.features for d in datasets]),
                   np.concatenate([d.labels for d in datasets]),
                   names, datasets[0].provenance + (note,))


def load_flows(paths: Iterable[str | Path], label_column: str = "Label",
               delimiter: str = ",") -> Dataset:
    """Read delimiter-separated flow files with a header row.

    Header names are stripped (the public CSVs pad them with spaces).  Cells
    that do not parse as numbers, including empty cells, become NaN; the
    literal ``Infinity`` tokens parse as inf.  Both are removed by
    :func:`clean`.
    """
    frames, names = [], None
    sources = []
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"flow file not found: {path}")
        frame = _read_one(path, label_column, delimiter)
        cols = [c for c in frame.columns if c != label_column]
        if names is None:
            names = cols
        elif cols != names:
            raise IngestionError(f"{path}: feature columns differ from the first file")
        frames.append(frame)
        sources.append(str(path))
    if not frames:
        raise ValidationError("no input files given")
    frame = pd.concat(frames, ignore_index=True) if len(frames) > 1 else frames[0]
    features = np.column_stack(
        [pd.to_numeric(frame[c], errors="coerce").to_numpy(dtype=float) for c in names]
    ) if names else np.empty((len(frame), 0))
    # the public CSVs use a cp1252 en dash in web-attack labels
    labels = frame[label_column].str.strip().str.replace("\ufffd", "–", regex=False)
    labels = labels.to_numpy(dtype=object)
    return Dataset(features, labels, tuple(names),
                   (f"load {', '.join(sources)}: {len(labels)} rows",))


def _check_field_counts(path: Path, delimiter: str):
    # pandas pads short rows with empty strings, which would be indistinguishable
    # from empty cells, so field counts are checked in a separate pass
    with open(path, newline="", encoding="utf-8", errors="replace") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise IngestionError(f"{path}: file is empty")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header) and row:
                raise IngestionError(
                    f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}")


def _read_one(path: Path, label_column: str, delimiter: str) -> pd.DataFrame:
    _check_field_counts(path, delimiter)
    try:
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False,
                            skipinitialspace=True, encoding="utf-8", encoding_errors="replace")
    except pd.errors.ParserError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    if label_column not in frame.columns:
        raise IngestionError(f"{path}: no {label_column!r} column in header")
    return frame


def clean(ds: Dataset) -> Dataset:
    """Drop records with any NaN or infinite feature."""
    keep = np.isfinite(ds.features).all(axis=1)
    dropped = int((~keep).sum())
    if dropped:
        per_label = Counter(ds.labels[~keep].tolist())
        log.info("clean: dropped %d records %s", dropped, dict(per_label))
    out = ds.subset(keep, f"clean: dropped {dropped}")
    if len(out) == 0:
        log.warning("clean: no records left")
    return out


@dataclass(frozen=True)
class ZScoreParams:
    mean: np.ndarray
    std: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    @property
    def constant(self) -> np.ndarray:
        """Mask of zero-variance features; these map to 0."""
        return self.std == 0


def fit_zscore(train: Dataset) -> ZScoreParams:
    if len(train) == 0:
        raise ValidationError("cannot fit normalization on an empty training set")
    x = train.features
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population statistics
    return ZScoreParams(mean, std, train.feature_names)


def normalize(features: np.ndarray, params: ZScoreParams) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.shape[-1] != len(params.mean):
        raise ValidationError(
            f"expected {len(params.mean)} features, got {features.shape[-1]}")
    safe = np.where(params.std == 0, 1.0, params.std)
    out = (features - params.mean) / safe
    out[..., params.std == 0] = 0.0
    return out


def apply_zscore(ds: Dataset, params: ZScoreParams) -> Dataset:
    return Dataset(normalize(ds.features, params), ds.labels, ds.feature_names,
                   ds.provenance + ("zscore",))


def stratified_train_counts(counts: Mapping[str, int], train_fraction) -> dict[str, int]:
    """Per-class training counts by largest-remainder apportionment.

    The training total is ``floor(fraction * n)``; each class first gets the
    floor of its exact share and the leftover records go to the classes with
    the largest fractional remainders (ties: larger class first, then label
    order).  Exact rational arithmetic keeps this platform independent.
    """
    frac = Fraction(str(train_fraction)) if isinstance(train_fraction, float) \
        else Fraction(train_fraction)
    if not 0 < frac < 1:
        raise ValidationError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    total = sum(counts.values())
    n_train = math.floor(frac * total)
    if total == 0:
        return {label: 0 for label in counts}
    shares = {label: Fraction(c * n_train, total) for label, c in counts.items()}
    alloc = {label: math.floor(s) for label, s in shares.items()}
    leftover = n_train - sum(alloc.values())
    order = sorted(counts, key=lambda lab: (-(shares[lab] - alloc[lab]), -counts[lab], str(lab)))
    for label in order[:leftover]:
        alloc[label] += 1
    return alloc


def split(ds: Dataset, train_fraction: float = 0.8, seed=0) -> tuple[Dataset, Dataset]:
    """Stratified train/test split; both parts keep the input's row order."""
    counts = ds.label_counts
    n_train = stratified_train_counts(counts, train_fraction)
    rng = np.random.default_rng(seed)
    in_train = np.zeros(len(ds), dtype=bool)
    for label in counts:
        idx = np.flatnonzero(ds.labels == label)
        chosen = rng.permutation(idx)[: n_train[label]]
        in_train[chosen] = True
    note = f"split train_fraction={train_fraction} seed={seed}"
    return ds.subset(in_train, note + " part=train"), ds.subset(~in_train, note + " part=test")


def downsample_benign(ds: Dataset, target_count: int, seed=0,
                      benign_label: str = BENIGN) -> Dataset:
    benign = np.flatnonzero(ds.labels == benign_label)
    if target_count < 0 or target_count > len(benign):
        raise ValidationError(
            f"cannot keep {target_count} {benign_label} records, only {len(benign)} available")
    if target_count == len(benign):
        return ds.with_note(f"downsample {benign_label}: kept all {target_count}")
    rng = np.random.default_rng(seed)
    keep = np.ones(len(ds), dtype=bool)
    keep[benign] = False
    keep[rng.choice(benign, size=target_count, replace=False)] = True
    return ds.subset(keep, f"downsample {benign_label}: {len(benign)} -> {target_count} seed={seed}")


def regroup_labels(ds: Dataset, grouping: Mapping[str, str]) -> Dataset:
    missing = sorted(set(ds.labels.tolist()) - set(grouping))
    if missing:
        raise ValidationError(f"grouping has no entry for labels {missing}")
    labels = np.array([grouping[lab] for lab in ds.labels.tolist()], dtype=object)
    return Dataset(ds.features, labels, ds.feature_names, ds.provenance + ("regroup",))


def exclude_labels(ds: Dataset, labels: Iterable[str]) -> tuple[Dataset, Dataset]:
    """Partition into (records whose label is not listed, records whose label is)."""
    labels = set(labels)
    mask = np.array([lab in labels for lab in ds.labels.tolist()], dtype=bool)
    note = f"exclude {sorted(labels)}"
    return ds.subset(~mask, note + " part=kept"), ds.subset(mask, note + " part=excluded")


def counts_table(stages: Mapping[str, Dataset], order: Sequence[str] | None = None) -> str:
    """Aligned per-class count table with one column per pipeline stage."""
    columns = list(stages)
    counts = {name: ds.label_counts for name, ds in stages.items()}
    if order is None:
        seen = {}
        for c in counts.values():
            for label in c:
                seen.setdefault(label, None)
        order = sorted(seen, key=lambda lab: -max(c.get(lab, 0) for c in counts.values()))
    width = max([len("Class")] + [len(str(lab)) for lab in order])
    lines = ["  ".join(["Class".ljust(width)] + [c.rjust(12) for c in columns])]
    for label in order:
        cells = [str(counts[c].get(label, 0)).rjust(12) for c in columns]
        lines.append("  ".join([str(label).ljust(width)] + cells))
    return "\n".join(lines) + "\n"
