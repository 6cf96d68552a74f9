"""Patch -> encode -> scale -> reshape, over a unified cross-dataset schema.

The unified schema is a list of slots. Each slot names the dataset field it
reads for each source (``fields``); a slot with no field for a split's source
is structurally absent there and contributes 0 (numeric) or the "unknown"
position (categorical). The shipped schema is 113 values wide.

Records are handled as a DataFrame of raw strings keyed by canonical field
name, which is what :class:`~tlconvnet.ingest.DatasetSplit` carries.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    LeakageError,
    SchemaError,
    ShapeError,
    StateCorruptError,
    StateVersionError,
)
from .ingest import TRAINING_ROLES, RawRecord, Source

UNKNOWN = "unknown"
STATE_FORMAT = "tlconvnet-preprocessor"
STATE_VERSION = 1
CONSTANT_STD = 1e-12


@dataclass(frozen=True)
class Slot:
    name: str
    kind: str  # numeric | categorical
    source: str  # shared | nslkdd | unswnb15
    fields: dict
    vocabulary: tuple | None = None
    aliases: dict = field(default_factory=dict)
    case: str | None = None

    def field_for(self, source):
        return self.fields.get(Source(source).value)

    def normalize(self, values):
        """Canonical categorical values; empty strings become ``unknown``."""
        s = pd.Series(values, dtype=object).astype(str).str.strip()
        if self.case == "lower":
            s = s.str.lower()
        if self.aliases:
            s = s.replace(self.aliases)
        return s.mask(s == "", UNKNOWN)

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "source": self.source, "fields": dict(self.fields)}
        if self.vocabulary is not None:
            d["vocabulary"] = list(self.vocabulary)
        if self.aliases:
            d["aliases"] = dict(self.aliases)
        if self.case:
            d["case"] = self.case
        return d


@dataclass(frozen=True)
class UnifiedSchema:
    name: str
    version: int
    slots: tuple

    @classmethod
    def from_dict(cls, d):
        try:
            slots = []
            for s in d["slots"]:
                if s["kind"] not in ("numeric", "categorical"):
                    raise SchemaError(f"slot {s['name']!r}: kind must be numeric or categorical")
                vocab = s.get("vocabulary")
                slots.append(
                    Slot(
                        name=s["name"],
                        kind=s["kind"],
                        source=s.get("source", "shared"),
                        fields=dict(s.get("fields", {})),
                        vocabulary=None if vocab is None else tuple(vocab),
                        aliases=dict(s.get("aliases", {})),
                        case=s.get("case"),
                    )
                )
            return cls(d.get("name", "unnamed"), int(d["version"]), tuple(slots))
        except KeyError as e:
            raise SchemaError(f"schema is missing key {e}") from e

    def to_dict(self):
        return {"name": self.name, "version": self.version, "slots": [s.to_dict() for s in self.slots]}

    @property
    def total_width(self):
        """Width implied by pinned vocabularies; ``None`` if some slot learns its vocabulary."""
        w = 0
        for s in self.slots:
            if s.kind == "numeric":
                w += 1
            elif s.vocabulary is None:
                return None
            else:
                w += len(set(s.vocabulary) - {UNKNOWN}) + 1
        return w


def load_schema(path=None):
    """Load a unified schema JSON file, or the shipped 113-wide default."""
    try:
        if path is None:
            with resources.files("tlconvnet.resources.schemas").joinpath("unified_v1.json").open() as f:
                return UnifiedSchema.from_dict(json.load(f))
        with open(path) as f:
            return UnifiedSchema.from_dict(json.load(f))
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaError(f"cannot read unified schema {path}: {e}") from e


@dataclass
class PreprocessorState:
    schema: UnifiedSchema
    source: str
    vocabularies: dict
    medians: dict
    mean: np.ndarray
    std: np.ndarray
    fitted_on: dict = field(default_factory=dict)

    @property
    def width(self):
        return len(self.mean)

    @property
    def constant(self):
        return self.std < CONSTANT_STD

    def slot_widths(self):
        return [1 if s.kind == "numeric" else len(self.vocabularies[s.name]) for s in self.schema.slots]

    def categorical_spans(self):
        """``{slot name: (start, stop)}`` offsets of each one-hot block."""
        spans, pos = {}, 0
        for s, w in zip(self.schema.slots, self.slot_widths()):
            if s.kind == "categorical":
                spans[s.name] = (pos, pos + w)
            pos += w
        return spans


def as_frame(records):
    """Accept a DataFrame, a DatasetSplit, a RawRecord or a list of RawRecords."""
    if isinstance(records, pd.DataFrame):
        return records
    if hasattr(records, "frame"):
        return records.frame
    if isinstance(records, RawRecord):
        records = [records]
    return pd.DataFrame([r.values for r in records], dtype=str)


def _column(frame, slot, source):
    name = slot.field_for(source)
    if name is None or name not in frame.columns:
        return None
    return frame[name]


def _numeric(col, slot):
    s = col.astype(str).str.strip()
    s = s.mask(s == "")
    try:
        return pd.to_numeric(s).to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise DataError(f"slot {slot.name!r}: non-numeric value ({e})") from e


def fit_patch(records, schema, source):
    """Training-set median of every numeric slot the source provides."""
    frame = as_frame(records)
    medians = {}
    for slot in schema.slots:
        if slot.kind != "numeric":
            continue
        col = _column(frame, slot, source)
        if col is None:
            continue
        values = _numeric(col, slot)
        values = values[~np.isnan(values)]
        if values.size == 0:
            raise DataError(f"slot {slot.name!r}: missing in every training row, median undefined")
        medians[slot.name] = float(np.median(values))
    return medians


def patch(records, state):
    """Fill numeric gaps with the fitted medians and categorical gaps with ``unknown``."""
    frame = as_frame(records).copy()
    for slot in state.schema.slots:
        col = _column(frame, slot, state.source)
        if col is None:
            continue
        name = slot.field_for(state.source)
        missing = col.astype(str).str.strip() == ""
        if not missing.any():
            continue
        fill = UNKNOWN if slot.kind == "categorical" else repr(state.medians[slot.name])
        frame.loc[missing, name] = fill
    return frame


def fit_encoder(records, schema, source):
    """Ordered vocabulary per categorical slot, ``unknown`` always last."""
    frame = as_frame(records)
    vocabularies = {}
    for slot in schema.slots:
        if slot.kind != "categorical":
            continue
        if slot.vocabulary is not None:
            vocab = sorted(set(slot.vocabulary) - {UNKNOWN})
        else:
            col = _column(frame, slot, source)
            observed = set() if col is None else set(slot.normalize(col.to_numpy())) - {UNKNOWN}
            if col is not None and not observed:
                raise DataError(f"slot {slot.name!r}: no values observed, cannot build a vocabulary")
            vocab = sorted(observed)
        vocabularies[slot.name] = vocab + [UNKNOWN]
    return vocabularies


def _encode_frame(frame, schema, source, vocabularies):
    n = len(frame)
    blocks = []
    for slot in schema.slots:
        col = _column(frame, slot, source)
        if slot.kind == "numeric":
            if col is None:
                blocks.append(np.zeros((n, 1)))
                continue
            values = _numeric(col, slot)
            if np.isnan(values).any():
                raise DataError(f"slot {slot.name!r}: unpatched missing values")
            blocks.append(values[:, None])
        else:
            vocab = vocabularies[slot.name]
            index = {v: i for i, v in enumerate(vocab)}
            unk = index[UNKNOWN]
            onehot = np.zeros((n, len(vocab)))
            if col is None:
                onehot[:, unk] = 1
            else:
                pos = np.fromiter((index.get(v, unk) for v in slot.normalize(col.to_numpy())), dtype=np.int64, count=n)
                onehot[np.arange(n), pos] = 1
            blocks.append(onehot)
    return np.hstack(blocks) if blocks else np.zeros((n, 0))


def encode(records, state):
    """Numeric slots copied, categorical slots one-hot. Returns ``(n, width)`` float64."""
    frame = as_frame(records)
    return _encode_frame(frame, state.schema, state.source, state.vocabularies)


def fit_scaler(vectors):
    """Population mean and standard deviation per dimension."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("fit_scaler needs at least 2 vectors")
    return x.mean(axis=0), x.std(axis=0)


def scale(vectors, state):
    """Standardize; constant dimensions map to 0."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.shape[-1] != state.width:
        raise ShapeError(f"vector width {x.shape[-1]} != fitted width {state.width}")
    const = state.constant
    safe_std = np.where(const, 1.0, state.std)
    z = (x - state.mean) / safe_std
    return np.where(const, 0.0, z)


def reshape(vector, width=113):
    """One flat vector -> ``(width, 1)`` ConvNet input; a batch ``(n, width)`` -> ``(n, width, 1)``."""
    v = np.asarray(vector)
    if v.shape[-1] != width:
        raise ShapeError(f"expected vectors of length {width}, got {v.shape[-1]}")
    return v[..., None]


def flatten(tensor):
    return np.asarray(tensor)[..., 0]


class Preprocessor:
    """Fits the four-step pipeline on one training split and applies it to others."""

    def __init__(self, schema=None):
        self.schema = schema or load_schema()
        self.state = None

    def fit(self, split):
        if split.role not in TRAINING_ROLES:
            raise LeakageError(f"refusing to fit preprocessing on a {split.role.value} split")
        source = split.source.value
        medians = fit_patch(split.frame, self.schema, source)
        vocabularies = fit_encoder(split.frame, self.schema, source)
        state = PreprocessorState(self.schema, source, vocabularies, medians, np.zeros(0), np.zeros(0))
        encoded = encode(patch(split.frame, state), state)
        state.mean, state.std = fit_scaler(encoded)
        state.fitted_on = {"source": source, "role": split.role.value, "rows": len(split)}
        self.state = state
        return state

    def transform(self, split):
        """``(n, width, 1)`` float32 tensors for a split from the fitted source."""
        if self.state is None:
            raise DataError("preprocessor is not fitted")
        if split.source.value != self.state.source:
            raise DataError(f"state was fitted on {self.state.source}, split comes from {split.source.value}")
        x = scale(encode(patch(split.frame, self.state), self.state), self.state)
        return reshape(x.astype(np.float32), self.state.width)

    def fit_transform(self, split):
        self.fit(split)
        return self.transform(split)


def save_state(state, path):
    doc = {
        "format": STATE_FORMAT,
        "version": STATE_VERSION,
        "schema": state.schema.to_dict(),
        "source": state.source,
        "vocabularies": state.vocabularies,
        "medians": state.medians,
        "mean": state.mean.tolist(),
        "std": state.std.tolist(),
        "fitted_on": state.fitted_on,
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_state(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError as e:
        raise StateCorruptError(f"{path}: no such preprocessor state") from e
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise StateCorruptError(f"{path}: corrupt preprocessor state ({e})") from e
    if not isinstance(doc, dict) or doc.get("format") != STATE_FORMAT:
        raise StateCorruptError(f"{path}: not a preprocessor state file")
    if doc.get("version") != STATE_VERSION:
        raise StateVersionError(f"{path}: state version {doc.get('version')}, expected {STATE_VERSION}")
    try:
        state = PreprocessorState(
            schema=UnifiedSchema.from_dict(doc["schema"]),
            source=doc["source"],
            vocabularies={k: list(v) for k, v in doc["vocabularies"].items()},
            medians={k: float(v) for k, v in doc["medians"].items()},
            mean=np.array(doc["mean"], dtype=np.float64),
            std=np.array(doc["std"], dtype=np.float64),
            fitted_on=doc.get("fitted_on", {}),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise StateCorruptError(f"{path}: incomplete preprocessor state ({e})") from e
    if len(state.mean) != sum(state.slot_widths()) or len(state.std) != len(state.mean):
        raise StateCorruptError(f"{path}: scaler width does not match the schema")
    return state


def preprocessor_from_state(state):
    p = Preprocessor(state.schema)
    p.state = state
    return p
