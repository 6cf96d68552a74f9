"""Loading, labelling and partitioning NSL-KDD and UNSW-NB15 CSV files.

A :class:`DatasetSplit` keeps every raw column as strings in a DataFrame
(column names are the canonical field names from the table layout), along
with the binary labels and the original attack names. Numeric columns are
validated at load time so malformed rows fail early with their row number.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError, MalformedRowError, SchemaError

NORMAL = "normal"


class Source(str, Enum):
    NSLKDD = "nslkdd"
    UNSWNB15 = "unswnb15"


class Role(str, Enum):
    BASE = "base"
    BASE_HOLDOUT = "base_holdout"
    TARGET = "target"
    TEST_PLUS = "test_plus"
    TEST_21 = "test_21"


TRAINING_ROLES = frozenset({Role.BASE, Role.TARGET})

NSLKDD_VARIANTS = {
    "TrainPlus": Role.TARGET,
    "TestPlus": Role.TEST_PLUS,
    "Test21": Role.TEST_21,
}


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # numeric | categorical | label | drop
    field: str
    role: str | None = None  # for label columns: binary | category


@dataclass(frozen=True)
class TableLayout:
    """Ordered column description of one CSV distribution."""

    name: str
    columns: tuple

    @classmethod
    def from_dict(cls, d):
        cols = []
        for c in d["columns"]:
            kind = c["kind"]
            if kind not in ("numeric", "categorical", "label", "drop"):
                raise SchemaError(f"column {c['name']!r}: unknown kind {kind!r}")
            cols.append(ColumnSpec(c["name"], kind, c.get("field", c["name"]), c.get("role")))
        layout = cls(d.get("name", "unnamed"), tuple(cols))
        if not layout.label_column("binary") and not layout.label_column("category"):
            raise SchemaError(f"layout {layout.name!r} has no label column")
        return layout

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise SchemaError(f"cannot read schema descriptor {path}: {e}") from e

    @property
    def names(self):
        return [c.name for c in self.columns]

    @property
    def fields(self):
        return [c.field for c in self.columns]

    def feature_kinds(self):
        return {c.field: c.kind for c in self.columns if c.kind in ("numeric", "categorical")}

    def label_column(self, role):
        for c in self.columns:
            if c.kind == "label" and (c.role or "category") == role:
                return c.field
        return None


def builtin_layout(name):
    """One of the shipped layouts: ``nslkdd``, ``unswnb15_partitioned``, ``unswnb15_raw``."""
    ref = resources.files("tlconvnet.resources.schemas").joinpath(f"{name}.json")
    with ref.open() as f:
        return TableLayout.from_dict(json.load(f))


@dataclass(frozen=True)
class RawRecord:
    values: dict
    source: Source
    original_label: str
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetStats:
    normal_count: int
    attack_count: int
    attack_pct: float
    novel_attack_pct: float | None = None


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    role: Role
    source: Source
    frame: pd.DataFrame
    original_labels: np.ndarray
    labels: np.ndarray
    feature_kinds: dict
    provenance: tuple = ()

    def __len__(self):
        return len(self.labels)

    @property
    def feature_columns(self):
        return list(self.feature_kinds)

    def record(self, i):
        row = self.frame.iloc[i]
        values = {c: row[c] for c in self.feature_kinds}
        meta = {c: row[c] for c in self.frame.columns if c not in self.feature_kinds}
        return RawRecord(values, self.source, str(self.original_labels[i]), meta)

    def records(self):
        for i in range(len(self)):
            yield self.record(i)

    def subset(self, indices, role=None):
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            role=self.role if role is None else role,
            frame=self.frame.iloc[idx].reset_index(drop=True),
            original_labels=self.original_labels[idx],
            labels=self.labels[idx],
            provenance=self.provenance + (f"subset of {len(self)} rows -> {len(idx)}",),
        )

    def with_role(self, role):
        return replace(self, role=role)

    def attack_types(self):
        """Normalized attack names present in this split."""
        return {normalize_label(s) for s, y in zip(self.original_labels, self.labels) if y == 1}


def normalize_label(name):
    return str(name).strip().lower()


def binarize_label(record):
    """0 for "normal" (case-insensitive, trimmed), 1 for anything else."""
    label = record.original_label if isinstance(record, RawRecord) else record
    if label is None or not str(label).strip():
        raise DataError("empty label")
    return 0 if normalize_label(label) == NORMAL else 1


def _read_rows(path, layout):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    width = len(layout.columns)
    first_name = layout.names[0].strip().lower()
    rows = []
    header_seen = False
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and row[0].strip().lower() == first_name:
                header = [h.strip() for h in row]
                if header != [n.strip() for n in layout.names]:
                    expected = set(n.strip() for n in layout.names)
                    got = set(header)
                    raise SchemaError(
                        f"{path}: header does not match layout {layout.name!r}; "
                        f"missing {sorted(expected - got)}, unexpected {sorted(got - expected)}"
                    )
                header_seen = True
                continue
            if len(row) != width:
                raise SchemaError(
                    f"{path}: row {lineno} has {len(row)} columns, layout {layout.name!r} expects {width}"
                )
            rows.append((lineno, row))
    return rows, header_seen


def _validate_numeric(frame, linenos, layout, path):
    for c in layout.columns:
        if c.kind != "numeric" and not (c.kind == "label" and c.role == "binary"):
            continue
        col = frame[c.field].str.strip()
        present = col != ""
        parsed = pd.to_numeric(col.where(present), errors="coerce")
        bad = present & ~np.isfinite(parsed.to_numpy(dtype=np.float64, na_value=np.nan))
        if c.kind == "label":
            bad |= ~present
        if bad.any():
            i = int(np.flatnonzero(bad.to_numpy())[0])
            raise MalformedRowError(path, linenos[i], f"column {c.name!r}: {frame[c.field].iat[i]!r} is not a finite number")


def _load_table(paths, layout, source, role):
    if isinstance(paths, (str, Path)):
        paths = [paths]
    frames, provenance = [], []
    for path in paths:
        rows, _ = _read_rows(path, layout)
        linenos = [n for n, _ in rows]
        frame = pd.DataFrame([r for _, r in rows], columns=layout.fields, dtype=str)
        if not rows:
            frame = pd.DataFrame({c: pd.Series([], dtype=str) for c in layout.fields})
        _validate_numeric(frame, linenos, layout, path)
        frames.append(frame)
        provenance.append(f"{path} ({len(rows)} rows)")
    frame = pd.concat(frames, ignore_index=True) if len(frames) > 1 else frames[0]
    original = _original_labels(frame, layout)
    labels = np.array([binarize_label(s) for s in original], dtype=np.int8)
    return DatasetSplit(
        role=role,
        source=source,
        frame=frame,
        original_labels=original,
        labels=labels,
        feature_kinds=layout.feature_kinds(),
        provenance=tuple(provenance),
    )


def _original_labels(frame, layout):
    binary = layout.label_column("binary")
    category = layout.label_column("category")
    n = len(frame)
    if category is not None:
        cat = frame[category].str.strip().to_numpy(dtype=object)
    else:
        cat = np.full(n, "", dtype=object)
    if binary is None:
        # NSL-KDD style: a single attack-name column, sometimes with a trailing dot
        return np.array([c.rstrip(".") for c in cat], dtype=object)
    flags = pd.to_numeric(frame[binary].str.strip()).to_numpy() if n else np.zeros(0)
    out = np.empty(n, dtype=object)
    for i in range(n):
        if flags[i] == 0:
            out[i] = NORMAL
        else:
            c = cat[i]
            out[i] = c if c and normalize_label(c) != NORMAL else "attack"
    return out


def load_nslkdd(path, variant="TrainPlus", layout=None):
    """Read one NSL-KDD file (41 features, attack name, difficulty score)."""
    try:
        role = NSLKDD_VARIANTS[variant]
    except KeyError:
        raise DataError(f"unknown NSL-KDD variant {variant!r}; choose from {sorted(NSLKDD_VARIANTS)}") from None
    return _load_table(path, layout or builtin_layout("nslkdd"), Source.NSLKDD, role)


def load_unswnb15(paths, schema=None, role=Role.BASE):
    """Read one or more UNSW-NB15 CSV files sharing a column layout.

    ``schema`` is a :class:`TableLayout`, a path to a descriptor JSON file,
    or ``None`` for the partitioned training/testing-set layout.
    """
    if schema is None:
        layout = builtin_layout("unswnb15_partitioned")
    elif isinstance(schema, TableLayout):
        layout = schema
    else:
        layout = TableLayout.load(schema)
    return _load_table(paths, layout, Source.UNSWNB15, role)


def compute_stats(split, training_attack_types=None):
    normal = int(np.sum(split.labels == 0))
    attack = int(np.sum(split.labels == 1))
    total = normal + attack
    attack_pct = 100.0 * attack / total if total else 0.0
    novel_pct = None
    if training_attack_types is not None:
        known = {normalize_label(t) for t in training_attack_types}
        novel = sum(
            1
            for s, y in zip(split.original_labels, split.labels)
            if y == 1 and normalize_label(s) not in known
        )
        novel_pct = 100.0 * novel / total if total else 0.0
    return DatasetStats(normal, attack, attack_pct, novel_pct)


def kfold_indices(n, k, seed):
    """Shuffled k-fold partition of ``range(n)``; fold sizes differ by at most one."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"cannot make {k} folds from {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def kfold_split(split, k, seed):
    """List of ``(train_fold, validation_fold)`` pairs."""
    folds = kfold_indices(len(split), k, seed)
    out = []
    for i, val in enumerate(folds):
        train = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        out.append((split.subset(train), split.subset(val, role=Role.BASE_HOLDOUT)))
    return out


def stratified_indices(labels, n_per_class, seed):
    rng = np.random.default_rng(seed)
    picked = []
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        if len(members) < n_per_class:
            raise DataError(f"class {cls} has {len(members)} samples, need {n_per_class}")
        picked.append(rng.choice(members, n_per_class, replace=False))
    return np.sort(np.concatenate(picked))


def make_fixture(split, n_per_class, seed):
    """Deterministic stratified subsample with ``n_per_class`` rows of each class."""
    return split.subset(stratified_indices(split.labels, n_per_class, seed))


def partition_base(split, holdout_fraction=0.1, seed=0):
    """Stratified train/holdout partition of the base dataset."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    hold = []
    for cls in (0, 1):
        members = np.flatnonzero(split.labels == cls)
        n_hold = int(round(holdout_fraction * len(members)))
        hold.append(rng.choice(members, n_hold, replace=False))
    hold = np.sort(np.concatenate(hold)).astype(np.int64)
    train = np.setdiff1d(np.arange(len(split)), hold)
    return split.subset(train, role=Role.BASE), split.subset(hold, role=Role.BASE_HOLDOUT)


def write_csv(split, path, layout, header=None):
    """Write ``split`` back out in ``layout``'s column order (byte-deterministic)."""
    header = layout.name.startswith("unsw-nb15-partitioned") if header is None else header
    frame = split.frame[layout.fields]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        if header:
            w.writerow(layout.names)
        w.writerows(frame.itertuples(index=False, name=None))
