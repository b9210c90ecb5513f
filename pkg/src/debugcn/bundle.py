"""Bit-exact reader/writer for the weight-bundle container and the manifest.

Container layout (binary, little-endian):
  magic "DWB1" (4 ASCII bytes), u32 tensor_count, then per tensor:
  u16 name_len, UTF-8 name, u8 ndim, ndim x u32 dims,
  product(dims) x f32 row-major data.

Manifest: UTF-8 JSON array of {path, label ("clean"|"trojaned"),
model_id, arch_tag}.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ManifestError,
    MissingTensorError,
    TensorRankError,
    TrailingDataError,
    TruncatedPayloadError,
    ValidationError,
)

MAGIC = b"DWB1"
FC_TENSOR = "fc.weight"
CONV_TENSOR = "conv1.weight"


# ------------------------------------------------------------- container level

def write_tensors(tensors: dict[str, np.ndarray], destination) -> None:
    """Write named float32 tensors in insertion order; byte-deterministic."""
    chunks = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.ndim < 1 or any(d < 1 for d in arr.shape):
            raise ValidationError(f"tensor '{name}': all dims must be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError(f"tensor '{name}': non-finite values")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(destination).write_bytes(b"".join(chunks))


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedPayloadError(f"truncated payload while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_tensors(source) -> dict[str, np.ndarray]:
    """Parse a container file into an ordered {name: float32 array} dict."""
    cur = _Cursor(Path(source).read_bytes())
    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (count,) = cur.unpack("<I", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = cur.unpack("<H", f"tensor {i} name length")
        raw_name = cur.take(name_len, f"tensor {i} name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TruncatedPayloadError(f"tensor {i} name is not valid UTF-8") from exc
        (ndim,) = cur.unpack("<B", f"tensor '{name}' ndim")
        dims = cur.unpack(f"<{ndim}I", f"tensor '{name}' dims") if ndim else ()
        if any(d < 1 for d in dims):
            raise TruncatedPayloadError(f"tensor '{name}' has a zero dim")
        size = math.prod(dims) if dims else 1
        data = cur.take(size * 4, f"tensor '{name}' data")
        arr = np.frombuffer(data, dtype="<f4").reshape(dims).astype(np.float32)
        tensors[name] = arr
    if cur.pos != len(cur.buf):
        raise TrailingDataError(f"{len(cur.buf) - cur.pos} trailing bytes after last tensor")
    return tensors


# --------------------------------------------------------------- bundle level

@dataclass
class WeightBundle:
    """Static weights of one scanned CNN: final FC matrix plus optional first conv."""

    model_id: str
    fc_weight: np.ndarray
    conv1_weight: np.ndarray | None = None
    arch_tag: str = ""

    def validate(self) -> None:
        if self.fc_weight.ndim != 2:
            raise TensorRankError(f"'{FC_TENSOR}' must be 2-D, got {self.fc_weight.ndim}-D")
        if not np.isfinite(self.fc_weight).all():
            raise ValidationError(f"'{FC_TENSOR}' contains non-finite values")
        if self.conv1_weight is not None:
            if self.conv1_weight.ndim != 4:
                raise TensorRankError(
                    f"'{CONV_TENSOR}' must be 4-D, got {self.conv1_weight.ndim}-D")
            if not np.isfinite(self.conv1_weight).all():
                raise ValidationError(f"'{CONV_TENSOR}' contains non-finite values")


def write_bundle(bundle: WeightBundle, destination) -> None:
    bundle.validate()
    tensors = {FC_TENSOR: bundle.fc_weight}
    if bundle.conv1_weight is not None:
        tensors[CONV_TENSOR] = bundle.conv1_weight
    write_tensors(tensors, destination)


def read_bundle(source) -> WeightBundle:
    tensors = read_tensors(source)
    if FC_TENSOR not in tensors:
        raise MissingTensorError(f"missing required tensor '{FC_TENSOR}'")
    extra = [n for n in tensors if n not in (FC_TENSOR, CONV_TENSOR)]
    if extra:
        warnings.warn(f"{source}: ignoring unknown tensors {extra}", stacklevel=2)
    bundle = WeightBundle(
        model_id=Path(source).stem,
        fc_weight=tensors[FC_TENSOR],
        conv1_weight=tensors.get(CONV_TENSOR),
    )
    bundle.validate()
    return bundle


# -------------------------------------------------------------- manifest level

LABELS = ("clean", "trojaned")


@dataclass
class ManifestEntry:
    path: Path
    label: str
    model_id: str
    arch_tag: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]

    def __len__(self):
        return len(self.entries)


def load_manifest(path) -> Manifest:
    """Load and validate a manifest; relative bundle paths resolve against it."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot parse manifest {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ManifestError("manifest must be a JSON array")
    entries = []
    seen = set()
    for i, obj in enumerate(raw):
        missing = {"path", "label", "model_id", "arch_tag"} - set(obj)
        if missing:
            raise ManifestError(f"entry {i}: missing keys {sorted(missing)}")
        if obj["label"] not in LABELS:
            raise ManifestError(f"entry {i}: label must be one of {LABELS}")
        if obj["model_id"] in seen:
            raise ManifestError(f"duplicate model_id '{obj['model_id']}'")
        seen.add(obj["model_id"])
        bundle_path = Path(obj["path"])
        if not bundle_path.is_absolute():
            bundle_path = path.parent / bundle_path
        try:
            with open(bundle_path, "rb") as fh:
                if fh.read(4) != MAGIC:
                    raise ManifestError(f"entry {i}: {bundle_path} is not a bundle file")
        except OSError as exc:
            raise ManifestError(f"entry {i}: cannot open {bundle_path}: {exc}") from exc
        entries.append(ManifestEntry(bundle_path, obj["label"], obj["model_id"], obj["arch_tag"]))
    return Manifest(entries)


def save_manifest(manifest: Manifest, path) -> None:
    rows = [
        {"path": str(e.path), "label": e.label, "model_id": e.model_id, "arch_tag": e.arch_tag}
        for e in manifest.entries
    ]
    Path(path).write_text(json.dumps(rows, indent=2) + "\n", "utf-8")


# ------------------------------------------------------------------ statistics

def summary_stats(bundle: WeightBundle) -> dict[str, dict[str, float]]:
    """Per-layer min/max/mean/quartiles over all values, computed in 64-bit."""
    layers = {FC_TENSOR: bundle.fc_weight}
    if bundle.conv1_weight is not None:
        layers[CONV_TENSOR] = bundle.conv1_weight
    stats = {}
    for name, arr in layers.items():
        vals = arr.astype(np.float64).ravel()
        q1, median, q3 = np.percentile(vals, [25, 50, 75])
        stats[name] = {
            "min": float(vals.min()),
            "max": float(vals.max()),
            "mean": float(vals.mean()),
            "q1": float(q1),
            "median": float(median),
            "q3": float(q3),
        }
    return stats
