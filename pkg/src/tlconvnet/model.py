"""ConvNet-B / ConvNet-T blocks, the concatenated ConvNet-TL, and checkpoints.

A ConvNet block is a stack of ConvNet layers; each ConvNet layer is
convolution -> hidden activation -> max pooling -> dropout. The output head
flattens the last block and applies a dense layer with a sigmoid unit.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import (
    CheckpointDigestError,
    CheckpointError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    ShapeError,
    SpecMismatchError,
)
from .nn import Conv1D, Dense, Dropout, Flatten, MaxPool1D, Sequential, activation

MAGIC = b"TLNID"
CHECKPOINT_VERSION = 1
DIGEST_SIZE = 32


@dataclass(frozen=True)
class ConvLayerSpec:
    filters: int
    kernel_size: int = 3
    stride: int = 1
    pool_width: int = 2
    pool_stride: int = 2
    retain_p: float = 0.5


@dataclass(frozen=True)
class BlockSpec:
    name: str
    layers: tuple
    trainable: bool = True
    in_channels: int | None = None  # None: whatever the previous block emits

    def __post_init__(self):
        if not self.layers:
            raise ConfigError(f"block {self.name!r} needs at least one ConvNet layer")


@dataclass(frozen=True)
class HeadSpec:
    hidden_units: int | None = None
    activation: str = "sigmoid"
    discardable: bool = False


@dataclass(frozen=True)
class ModelSpec:
    blocks: tuple
    head: HeadSpec = HeadSpec()
    input_length: int = 113
    input_channels: int = 1
    hidden_activation: str = "relu"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        blocks = tuple(
            BlockSpec(
                name=b["name"],
                layers=tuple(ConvLayerSpec(**layer) for layer in b["layers"]),
                trainable=b.get("trainable", True),
                in_channels=b.get("in_channels"),
            )
            for b in d["blocks"]
        )
        return cls(
            blocks=blocks,
            head=HeadSpec(**d.get("head", {})),
            input_length=d.get("input_length", 113),
            input_channels=d.get("input_channels", 1),
            hidden_activation=d.get("hidden_activation", "relu"),
        )

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def architecture(self):
        """The spec with training-only flags stripped; two checkpoints are compatible iff these match."""
        d = self.to_dict()
        for b in d["blocks"]:
            b.pop("trainable")
        d["head"].pop("discardable")
        return d

    def block(self, name):
        for b in self.blocks:
            if b.name == name:
                return b
        raise ConfigError(f"no block named {name!r}")


PROFILES = {
    # ConvNet-B and ConvNet-T filter counts per ConvNet layer
    "paper": {"base": (256, 512), "target": (8, 16)},
    "desk": {"base": (32, 64), "target": (8, 16)},
}


def block_spec(name, filters, trainable=True, **layer_kw):
    return BlockSpec(name, tuple(ConvLayerSpec(f, **layer_kw) for f in filters), trainable)


def stage1_spec(profile="desk", input_length=113, **layer_kw):
    """ConvNet-B with a temporary output head."""
    base = block_spec("base", PROFILES[profile]["base"], **layer_kw)
    return ModelSpec(blocks=(base,), head=HeadSpec(discardable=True), input_length=input_length)


def target_block_spec(profile="desk", **layer_kw):
    return block_spec("target", PROFILES[profile]["target"], **layer_kw)


def tl_spec(profile="desk", input_length=113, base_trainable=False, **layer_kw):
    """ConvNet-B (frozen by default) feeding ConvNet-T, plus a fresh head."""
    base = block_spec("base", PROFILES[profile]["base"], trainable=base_trainable, **layer_kw)
    return ModelSpec(blocks=(base, target_block_spec(profile, **layer_kw)), input_length=input_length)


def layer_shapes(spec):
    """Per-sample ``(length, channels)`` after every layer, as ``[(label, shape), ...]``."""
    model = ConvNetModel(spec, seed=0)
    return model.shapes


class ConvNetModel:
    """Blocks of ConvNet layers plus an output head, with per-block freezing.

    Frozen blocks that sit upstream of every trainable layer run in inference
    mode during training (no dropout, nothing cached) unless
    ``frozen_dropout`` is set. Frozen blocks further downstream still run in
    training mode so gradients can flow through them.
    """

    def __init__(self, spec, seed=0, rng=None, frozen_dropout=False):
        self.spec = spec
        self.frozen_dropout = frozen_dropout
        rng = np.random.default_rng(seed) if rng is None else rng
        self.groups = []  # [(name, [layers])], blocks in order then "head"
        self.shapes = []
        shape = (spec.input_length, spec.input_channels)
        for block in spec.blocks:
            if block.in_channels is not None and block.in_channels != shape[1]:
                raise ShapeError(
                    f"block {block.name!r} declares {block.in_channels} input channels "
                    f"but receives {shape[1]}"
                )
            layers = []
            for i, ls in enumerate(block.layers, start=1):
                for layer in (
                    Conv1D(shape[1], ls.filters, ls.kernel_size, ls.stride, rng=rng),
                    activation(spec.hidden_activation),
                    MaxPool1D(ls.pool_width, ls.pool_stride),
                    Dropout(ls.retain_p),
                ):
                    label = f"{block.name}.{i}.{layer.kind}"
                    try:
                        shape = layer.output_shape(shape)
                    except ShapeError as e:
                        raise ShapeError(f"{label}: {e}") from None
                    if shape[0] < 1:
                        raise ShapeError(f"{label}: output length collapses to {shape[0]}")
                    self.shapes.append((label, shape))
                    layers.append(layer)
            self.groups.append((block.name, layers))
        head = [Flatten()]
        width = shape[0] * shape[1]
        if spec.head.hidden_units:
            head += [Dense(width, spec.head.hidden_units, rng=rng), activation(spec.hidden_activation)]
            width = spec.head.hidden_units
        head += [Dense(width, 1, rng=rng), activation(spec.head.activation)]
        self.groups.append(("head", head))
        self.frozen = {b.name for b in spec.blocks if not b.trainable}

    @property
    def layers(self):
        return [layer for _, layers in self.groups for layer in layers]

    def group(self, name):
        for n, layers in self.groups:
            if n == name:
                return layers
        raise ConfigError(f"unknown block selector {name!r}")

    @property
    def current_spec(self):
        blocks = tuple(replace(b, trainable=b.name not in self.frozen) for b in self.spec.blocks)
        return replace(self.spec, blocks=blocks)

    # freezing

    def freeze(self, selector):
        """Freeze the named block(s). ``"none"`` (or ``None``) unfreezes everything."""
        if selector is None or selector == "none":
            self.frozen = set()
            return self
        names = [selector] if isinstance(selector, str) else list(selector)
        for name in names:
            self.group(name)
        self.frozen |= set(names)
        return self

    def unfreeze(self, selector):
        names = [selector] if isinstance(selector, str) else list(selector)
        for name in names:
            self.group(name)
        self.frozen -= set(names)
        return self

    def trainable_params(self):
        """``(layer, name)`` slots outside frozen blocks, in declaration order."""
        return [
            (layer, pname)
            for gname, layers in self.groups
            if gname not in self.frozen
            for layer in layers
            for pname in layer.params()
        ]

    def all_params(self):
        return [(layer, pname) for layer in self.layers for pname in layer.params()]

    def _first_trainable_group(self):
        for i, (name, layers) in enumerate(self.groups):
            if name not in self.frozen and any(layer.params() for layer in layers):
                return i
        return len(self.groups)

    # forward / backward

    def forward(self, x, train=False, rng=None):
        first = self._first_trainable_group()
        for i, (name, layers) in enumerate(self.groups):
            mode = train and (i >= first or name not in self.frozen or self.frozen_dropout)
            for layer in layers:
                x = layer.forward(x, train=mode, rng=rng)
        return x

    def backward(self, grad):
        """Backpropagate down to the earliest trainable block; returns the last gradient computed."""
        first = self._first_trainable_group()
        for _, layers in reversed(self.groups[first:]):
            for layer in reversed(layers):
                grad = layer.backward(grad)
        return grad

    def predict_proba(self, x, batch_size=1024):
        x = np.asarray(x)
        out = [self.forward(x[i : i + batch_size])[:, 0] for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.float32)

    def patterns(self):
        return [p for p in (layer.pattern() for layer in self.layers) if p is not None]

    def param_arrays(self):
        return [getattr(layer, name) for layer, name in self.all_params()]

    def block_arrays(self, name):
        return [getattr(layer, p) for layer in self.group(name) for p in layer.params()]


def build_convnet_b(spec, seed=0):
    """The ConvNet-B layer stack on its own, without any head."""
    return Sequential(build_stage1_model(spec, seed).group(spec.blocks[0].name))


def build_stage1_model(spec, seed=0):
    if len(spec.blocks) != 1:
        raise ConfigError("a Stage-1 spec holds exactly one block (ConvNet-B)")
    return ConvNetModel(spec, seed=seed)


def assemble_tl(base, target_spec, head_spec=None, seed=0, frozen_dropout=False):
    """ConvNet-B from ``base`` (model or checkpoint path) + fresh ConvNet-T and head.

    The Stage-1 temporary head is dropped and the base block is frozen.
    """
    if not isinstance(base, ConvNetModel):
        base = load_checkpoint(base)
    base_block = replace(base.spec.blocks[0], trainable=False)
    target_spec = replace(target_spec, trainable=True)
    spec = ModelSpec(
        blocks=(base_block, target_spec),
        head=head_spec or HeadSpec(),
        input_length=base.spec.input_length,
        input_channels=base.spec.input_channels,
        hidden_activation=base.spec.hidden_activation,
    )
    model = ConvNetModel(spec, seed=seed, frozen_dropout=frozen_dropout)
    src = base.group(base_block.name)
    dst = model.group(base_block.name)
    for s, d in zip(src, dst):
        for name, p in s.params().items():
            setattr(d, name, p.copy())
        d.zero_grad()
    return model


# checkpoints


def _serialize(model):
    spec_bytes = model.current_spec.canonical_json().encode()
    arrays = model.param_arrays()
    parts = [MAGIC, struct.pack("<H", CHECKPOINT_VERSION), struct.pack("<I", len(spec_bytes)), spec_bytes]
    parts.append(struct.pack("<I", len(arrays)))
    for a in arrays:
        parts.append(struct.pack("<I", a.size))
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model, path):
    data = _serialize(model)
    with open(path, "wb") as f:
        f.write(data)
    return hashlib.sha256(data).hexdigest()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(f"checkpoint truncated at byte {len(self.data)} (needed {self.pos + n})")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def load_checkpoint(path, expected_spec=None):
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError as e:
        raise CheckpointError(f"{path}: no such checkpoint") from e
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<H", r.take(2))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    (spec_len,) = struct.unpack("<I", r.take(4))
    spec_bytes = r.take(spec_len)
    (n_arrays,) = struct.unpack("<I", r.take(4))
    raw = []
    for _ in range(n_arrays):
        (count,) = struct.unpack("<I", r.take(4))
        raw.append(r.take(4 * count))
    digest = r.take(DIGEST_SIZE)
    if r.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - r.pos} trailing bytes after digest")
    if hashlib.sha256(data[: -DIGEST_SIZE]).digest() != digest:
        raise CheckpointDigestError(f"{path}: digest mismatch, file is corrupt")
    try:
        spec = ModelSpec.from_dict(json.loads(spec_bytes))
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: unreadable model spec ({e})") from e
    if expected_spec is not None and spec.architecture() != expected_spec.architecture():
        raise SpecMismatchError(f"{path}: checkpoint architecture does not match the expected spec")
    model = ConvNetModel(spec, seed=0)
    slots = model.all_params()
    if len(slots) != n_arrays:
        raise SpecMismatchError(f"{path}: spec implies {len(slots)} arrays, file holds {n_arrays}")
    for (layer, name), buf in zip(slots, raw):
        ref = getattr(layer, name)
        arr = np.frombuffer(buf, dtype="<f4")
        if arr.size != ref.size:
            raise SpecMismatchError(f"{path}: array size {arr.size} != expected {ref.size}")
        setattr(layer, name, arr.astype(np.float32).reshape(ref.shape))
        layer.zero_grad()
    return model


def checkpoint_digest(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()

