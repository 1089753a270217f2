"""Binary container formats.

Two little-endian formats share the same framing style:

Tensor container (".lidt"): magic "LIDT", version u32, tensor count u32,
then per tensor: name length u16 + UTF-8 name, rank u8, dims u32 each,
payload float64 row-major.

Embedding file (".lide"): magic "LIDE", version u32, record count u32,
then per record: segment_id length u16 + UTF-8 id, label u8 (0 english,
1 mandarin), layer u8 (0 feature, 1..6 encoder layer), T u32, D u32,
payload float32 row-major.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

TENSOR_MAGIC = b"LIDT"
EMBED_MAGIC = b"LIDE"
FORMAT_VERSION = 1


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named float64 tensors. Names must be unique (dict guarantees it)."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise FormatError(f"tensor name too long: {name!r}")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.tobytes(order="C"))


def read_tensors(path) -> dict[str, np.ndarray]:
    """Read a tensor container, preserving tensor order."""
    path = Path(path)
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != TENSOR_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported container version {version}")
        for i in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(fh, 2, f"tensor {i} name length"))
            name = _read_exact(fh, nlen, f"tensor {i} name").decode("utf-8")
            if name in out:
                raise FormatError(f"duplicate tensor name {name!r}")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, f"{name} rank"))
            dims = struct.unpack(
                f"<{rank}I", _read_exact(fh, 4 * rank, f"{name} dims")
            )
            n_elems = 1
            for d in dims:
                n_elems *= d
            payload = _read_exact(fh, 8 * n_elems, f"{name} payload")
            out[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
        if fh.read(1):
            raise FormatError("trailing bytes after last tensor")
    return out


@dataclass
class EmbeddingRecord:
    """One segment's feature or embedding sequence."""

    segment_id: str
    label: int  # 0 english, 1 mandarin
    layer: int  # 0 = front-end feature, 1..6 = encoder layer
    data: np.ndarray  # T x D float32

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def write_embeddings(path, records: list[EmbeddingRecord]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(records)))
        for rec in records:
            data = np.ascontiguousarray(rec.data, dtype=np.float32)
            if data.ndim != 2:
                raise FormatError(f"record {rec.segment_id!r}: data must be 2-D")
            raw = rec.segment_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BBII", rec.label, rec.layer, *data.shape))
            fh.write(data.tobytes(order="C"))


def read_embeddings(path) -> list[EmbeddingRecord]:
    path = Path(path)
    records: list[EmbeddingRecord] = []
    seen: set[str] = set()
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != EMBED_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {EMBED_MAGIC!r}")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported embedding-file version {version}")
        for i in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(fh, 2, f"record {i} id length"))
            seg_id = _read_exact(fh, nlen, f"record {i} id").decode("utf-8")
            if seg_id in seen:
                raise FormatError(f"duplicate segment_id {seg_id!r}")
            seen.add(seg_id)
            label, layer, t, d = struct.unpack(
                "<BBII", _read_exact(fh, 10, f"{seg_id} record header")
            )
            payload = _read_exact(fh, 4 * t * d, f"{seg_id} payload")
            data = np.frombuffer(payload, dtype="<f4").reshape(t, d).copy()
            records.append(EmbeddingRecord(seg_id, label, layer, data))
        if fh.read(1):
            raise FormatError("trailing bytes after last record")
    return records
