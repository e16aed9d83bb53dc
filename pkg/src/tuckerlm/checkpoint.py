"""Named-tensor checkpoints and the LRDK binary file format.

Layout (all integers little-endian)::

    b"LRDK"  u32 version  u32 tensor_count
    tensor_count x record:
        u16 name_len, name (UTF-8), u8 dtype (0=f64, 1=f32, 2=f16), u8 ndim,
        ndim x u64 dims, u64 data_offset (absolute, 64-byte aligned)
    u32 meta_len, meta (UTF-8 JSON: spec name, precision, decomposition)
    zero padding, then each tensor's row-major data at its offset

Tensors are held as read-only float64 arrays in memory; the on-disk dtype is
the checkpoint precision.  float16 storage rounds to nearest even.
"""

from __future__ import annotations

import json
import re
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compress import factored_params
from .config import DecompConfig, from_document, require_valid, to_document
from .models import ModelSpec, get_spec
from .tucker import tucker2d

MAGIC = b"LRDK"
VERSION = 1
ALIGN = 64
DTYPES = {"f64": (0, np.dtype("<f8")), "f32": (1, np.dtype("<f4")), "f16": (2, np.dtype("<f2"))}
_CODE_TO_DTYPE = {code: (name, dt) for name, (code, dt) in DTYPES.items()}
PRECISION_BYTES = {name: dt.itemsize for name, (_, dt) in DTYPES.items()}


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class DuplicateTensorError(CheckpointError):
    pass


class LayoutError(CheckpointError):
    """Tensor names or shapes that do not fit the bound model spec."""


@dataclass
class Checkpoint:
    entries: dict[str, np.ndarray]
    spec_name: str
    precision: str = "f64"
    decomposition: DecompConfig | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.precision not in DTYPES:
            raise ValueError(f"unknown precision {self.precision!r}")
        frozen = {}
        for name, arr in self.entries.items():
            a = np.array(arr, dtype=np.float64, copy=True)
            a.flags.writeable = False
            frozen[name] = a
        self.entries = frozen

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.entries.values())

    def is_factored(self, name: str) -> bool:
        return f"{name}.A" in self.entries


def layer_tensor_name(layer: int, role: str) -> str:
    return f"layer.{layer}.{role}"


_NAME_RE = re.compile(r"^layer\.(\d+)\.(\w+?)(?:\.([ABC]))?$")
_GLOBAL = {
    "decoder": ("embed", "norm_final", "lm_head"),
    "toy": ("embed", "norm_final", "lm_head"),
    "encoder": ("embed",),
}
_LAYER_AUX = {"decoder": ("attn_norm", "mlp_norm"), "toy": ("attn_norm", "mlp_norm"),
              "encoder": ()}


def check_layout(ckpt: Checkpoint, spec: ModelSpec) -> None:
    """Raise :class:`LayoutError` if any name or shape does not fit ``spec``."""
    seen_dense, seen_factored = set(), set()
    for name, arr in ckpt.entries.items():
        if name in _GLOBAL[spec.family]:
            continue
        m = _NAME_RE.match(name)
        if not m:
            raise LayoutError(f"tensor name {name!r} does not parse against {spec.name}")
        layer, role, part = int(m.group(1)), m.group(2), m.group(3)
        if layer >= spec.n_layers:
            raise LayoutError(f"{name!r}: layer {layer} outside 0..{spec.n_layers - 1}")
        if role in _LAYER_AUX[spec.family] and part is None:
            continue
        if role not in spec.role_names:
            raise LayoutError(f"{name!r}: unknown tensor role {role!r}")
        base = layer_tensor_name(layer, role)
        if part is None:
            shape = spec.roles[spec.role_index(role)].shape
            if arr.shape != shape:
                raise LayoutError(f"{name!r} has shape {arr.shape}, expected {shape}")
            seen_dense.add(base)
        else:
            seen_factored.add(base)
    both = seen_dense & seen_factored
    if both:
        raise LayoutError(f"tensors stored both dense and factored: {sorted(both)}")
    for base in seen_factored:
        if not all(f"{base}.{p}" in ckpt.entries for p in "ABC"):
            raise LayoutError(f"{base!r} is missing part of its A/B/C triple")


def random_checkpoint(spec: ModelSpec, seed: int = 42, sigma: float = 0.02,
                      precision: str = "f64", max_params: int = 50_000_000) -> Checkpoint:
    """Seeded Gaussian weights for a llama-style spec; norm weights are ones."""
    if spec.family == "encoder":
        raise ValueError("random weights are generated for llama-style specs only")
    if spec.total_params > max_params:
        raise ValueError(f"{spec.name} has {spec.total_params} parameters, above the "
                         f"{max_params} limit for materialized checkpoints")
    rng = np.random.default_rng(seed)
    e: dict[str, np.ndarray] = {"embed": sigma * rng.standard_normal((spec.vocab, spec.hidden))}
    for l in range(spec.n_layers):
        e[layer_tensor_name(l, "attn_norm")] = np.ones(spec.hidden)
        for role in spec.roles:
            e[layer_tensor_name(l, role.name)] = sigma * rng.standard_normal(role.shape)
        e[layer_tensor_name(l, "mlp_norm")] = np.ones(spec.hidden)
    e["norm_final"] = np.ones(spec.hidden)
    e["lm_head"] = sigma * rng.standard_normal((spec.hidden, spec.vocab))
    ckpt = Checkpoint(e, spec.name, precision)
    if precision != "f64":
        dt = DTYPES[precision][1]
        ckpt = Checkpoint({k: v.astype(dt) for k, v in ckpt.entries.items()}, spec.name, precision)
    return ckpt


# -- serialization -----------------------------------------------------------

def _meta(ckpt: Checkpoint, spec: ModelSpec | None) -> dict:
    meta = {"spec": ckpt.spec_name, "precision": ckpt.precision}
    if ckpt.decomposition is not None:
        if spec is None:
            spec = get_spec(ckpt.spec_name)
        meta["decomposition"] = to_document(ckpt.decomposition, spec)
    if ckpt.extra:
        meta["extra"] = ckpt.extra
    return meta


def to_bytes(ckpt: Checkpoint, spec: ModelSpec | None = None) -> bytes:
    code, dt = DTYPES[ckpt.precision]
    names = list(ckpt.entries)
    encoded = [n.encode("utf-8") for n in names]
    meta = json.dumps(_meta(ckpt, spec), sort_keys=True).encode("utf-8")

    header_len = 12 + sum(2 + len(b) + 2 + 8 * ckpt.entries[n].ndim + 8
                          for n, b in zip(names, encoded)) + 4 + len(meta)
    offset = -(-header_len // ALIGN) * ALIGN
    offsets, blobs = [], []
    for n in names:
        blob = np.ascontiguousarray(ckpt.entries[n], dtype=dt).tobytes()
        offsets.append(offset)
        blobs.append(blob)
        offset = -(-(offset + len(blob)) // ALIGN) * ALIGN

    out = bytearray(MAGIC + struct.pack("<II", VERSION, len(names)))
    for n, b, off in zip(names, encoded, offsets):
        arr = ckpt.entries[n]
        out += struct.pack("<H", len(b)) + b + struct.pack("<BB", code, arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape) + struct.pack("<Q", off)
    out += struct.pack("<I", len(meta)) + meta
    for off, blob in zip(offsets, blobs):
        out += bytes(off - len(out))
        out += blob
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedCheckpointError(
                f"file ends at byte {len(self.buf)} while reading {what} "
                f"(needs {self.pos + n})")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def from_bytes(buf: bytes, spec: ModelSpec | None = None) -> Checkpoint:
    r = _Reader(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    r.pos = 4
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise VersionMismatchError(f"format version {version}, this reader supports {VERSION}")
    records = []
    names = set()
    for i in range(count):
        (nlen,) = r.unpack("<H", f"record {i} name length")
        name = r.take(nlen, f"record {i} name").decode("utf-8")
        if name in names:
            raise DuplicateTensorError(f"tensor {name!r} appears more than once")
        names.add(name)
        code, ndim = r.unpack("<BB", f"record {i} dtype")
        if code not in _CODE_TO_DTYPE:
            raise CheckpointError(f"tensor {name!r}: unknown dtype code {code}")
        dims = r.unpack(f"<{ndim}Q", f"record {i} dims")
        (off,) = r.unpack("<Q", f"record {i} offset")
        records.append((name, code, dims, off))
    (mlen,) = r.unpack("<I", "metadata length")
    meta = json.loads(r.take(mlen, "metadata").decode("utf-8"))

    entries = {}
    for name, code, dims, off in records:
        _, dt = _CODE_TO_DTYPE[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        if off + nbytes > len(buf):
            raise TruncatedCheckpointError(
                f"tensor {name!r} needs bytes {off}..{off + nbytes} but the file has {len(buf)}")
        entries[name] = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize,
                                      offset=off).reshape(dims)
    cfg = None
    if "decomposition" in meta:
        cfg = from_document(meta["decomposition"], spec or get_spec(meta["spec"]))
    ckpt = Checkpoint(entries, meta["spec"], meta["precision"], cfg, meta.get("extra", {}))
    if spec is not None:
        check_layout(ckpt, spec)
    return ckpt


def save_checkpoint(ckpt: Checkpoint, path, spec: ModelSpec | None = None) -> None:
    Path(path).write_bytes(to_bytes(ckpt, spec))


def load_checkpoint(path, spec: ModelSpec | None = None) -> Checkpoint:
    return from_bytes(Path(path).read_bytes(), spec)


# -- decomposition -----------------------------------------------------------

class AlreadyDecomposedError(ValueError):
    pass


def _merge(prev: DecompConfig | None, cfg: DecompConfig) -> DecompConfig:
    if prev is None or prev.is_empty:
        return cfg
    return DecompConfig(prev.pruned_ranks | cfg.pruned_ranks,
                        tuple(sorted(set(prev.layers) | set(cfg.layers))),
                        tuple(sorted(set(prev.tensors) | set(cfg.tensors))))


def apply_decomposition(ckpt: Checkpoint, cfg: DecompConfig, spec: ModelSpec | None = None,
                        workers: int | None = None) -> Checkpoint:
    """New checkpoint with each selected weight replaced by its A/B/C factors."""
    spec = spec or get_spec(ckpt.spec_name)
    require_valid(cfg, spec)
    targets = []
    for l, k, p in cfg.triples():
        name = layer_tensor_name(l, spec.roles[k].name)
        if ckpt.is_factored(name):
            raise AlreadyDecomposedError(f"{name} is already decomposed")
        if name not in ckpt.entries:
            raise KeyError(f"checkpoint has no tensor {name!r}")
        targets.append((name, p))
    if not targets:
        return Checkpoint(dict(ckpt.entries), ckpt.spec_name, ckpt.precision,
                          ckpt.decomposition, dict(ckpt.extra))

    def factor(item):
        name, p = item
        return name, tucker2d(ckpt.entries[name], p)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = dict(pool.map(factor, targets))
    else:
        results = dict(map(factor, targets))

    # factors are rounded to the storage precision so that saving is lossless
    dt = DTYPES[ckpt.precision][1]
    entries: dict[str, np.ndarray] = {}
    for name, arr in ckpt.entries.items():
        if name in results:
            f = results[name]
            entries[f"{name}.A"] = f.a.astype(dt)
            entries[f"{name}.B"] = f.b.astype(dt)
            entries[f"{name}.C"] = f.c.astype(dt)
        else:
            entries[name] = arr
    return Checkpoint(entries, ckpt.spec_name, ckpt.precision,
                      _merge(ckpt.decomposition, cfg), dict(ckpt.extra))


def predicted_params(spec_params: int, spec: ModelSpec, cfg: DecompConfig) -> int:
    """Parameter count after applying ``cfg`` to a checkpoint with ``spec_params``."""
    out = spec_params
    for _, k, p in cfg.pruned_ranks:
        h, w = spec.roles[k].shape
        out -= h * w - factored_params(h, w, p)
    return out
