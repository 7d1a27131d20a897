"""Binary and text persistence: HGB1 matrices, HGC1 checkpoints,
JSONL training history, and sectioned split files.

All binary fields are little-endian. Matrices are float32 row-major, so
write→read round-trips are bit-exact.
"""

import json
import struct

import numpy as np

from .errors import ParseError, ValidationError

MATRIX_MAGIC = b"HGB1"
CHECKPOINT_MAGIC = b"HGC1"

_U64 = struct.Struct("<Q")


def _as_f32_payload(arr, what):
    arr = np.asarray(arr)
    if arr.dtype != np.float32:
        raise ValidationError(
            f"{what} must be float32 (got {arr.dtype}); convert explicitly "
            "so the write/read round trip stays bit-exact")
    return np.ascontiguousarray(arr, dtype="<f4")


def write_matrix(path, arr):
    arr = _as_f32_payload(arr, "HGB1 matrix")
    if arr.ndim != 2:
        raise ValidationError(f"HGB1 stores 2-D matrices, got ndim={arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(_U64.pack(arr.shape[0]))
        fh.write(_U64.pack(arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def _read_exact(fh, n, path, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise ParseError(path, 0, f"truncated {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_matrix_body(fh, path):
    n = _U64.unpack(_read_exact(fh, 8, path, "row count"))[0]
    f = _U64.unpack(_read_exact(fh, 8, path, "column count"))[0]
    data = _read_exact(fh, 4 * n * f, path, "matrix payload")
    return np.frombuffer(data, dtype="<f4").reshape(n, f).astype(np.float32, copy=True)


def read_matrix(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, path, "magic")
        if magic != MATRIX_MAGIC:
            raise ParseError(path, 0, f"bad magic {magic!r}, expected {MATRIX_MAGIC!r}")
        return _read_matrix_body(fh, path)


def _write_blob(fh, data: bytes):
    fh.write(_U64.pack(len(data)))
    fh.write(data)


def _read_blob(fh, path, what):
    n = _U64.unpack(_read_exact(fh, 8, path, what + " length"))[0]
    return _read_exact(fh, n, path, what)


def write_checkpoint(path, fingerprint: str, meta: dict, tensors):
    """HGC1 = magic, fingerprint blob, meta-JSON blob, then an ordered
    sequence of 2-D tensors as embedded HGB1 blocks. Order is the contract:
    readers rebuild parameters positionally from the meta backbone."""
    tensors = [_as_f32_payload(t, f"checkpoint tensor {i}")
               for i, t in enumerate(tensors)]
    for i, t in enumerate(tensors):
        if t.ndim != 2:
            raise ValidationError(f"checkpoint tensor {i} must be 2-D, got {t.ndim}-D")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        _write_blob(fh, fingerprint.encode("utf-8"))
        _write_blob(fh, json.dumps(meta, sort_keys=True).encode("utf-8"))
        fh.write(_U64.pack(len(tensors)))
        for t in tensors:
            fh.write(MATRIX_MAGIC)
            fh.write(_U64.pack(t.shape[0]))
            fh.write(_U64.pack(t.shape[1]))
            fh.write(t.tobytes(order="C"))


def read_checkpoint(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, path, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise ParseError(path, 0, f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        fingerprint = _read_blob(fh, path, "fingerprint").decode("utf-8")
        meta = json.loads(_read_blob(fh, path, "meta").decode("utf-8"))
        n_tensors = _U64.unpack(_read_exact(fh, 8, path, "tensor count"))[0]
        tensors = []
        for _ in range(n_tensors):
            tmagic = _read_exact(fh, 4, path, "tensor magic")
            if tmagic != MATRIX_MAGIC:
                raise ParseError(path, 0, f"bad tensor magic {tmagic!r}")
            tensors.append(_read_matrix_body(fh, path))
    return fingerprint, meta, tensors


HISTORY_KEYS = ("epoch", "total", "align", "unif", "C", "H_proxy", "alpha")


def write_history(path, rows):
    """One JSON object per epoch; keys fixed so files diff cleanly."""
    for i, row in enumerate(rows):
        missing = set(HISTORY_KEYS) - set(row)
        if missing:
            raise ValidationError(f"history row {i} missing keys {sorted(missing)}")
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps({k: row[k] for k in HISTORY_KEYS}) + "\n")


def read_history(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"bad JSON: {exc}") from None
            missing = set(HISTORY_KEYS) - set(row)
            if missing:
                raise ParseError(path, line_no, f"missing keys {sorted(missing)}")
            rows.append(row)
    return rows


def write_sections(path, sections):
    """Sectioned index/pair lists: '#name' headers, one entry per line.
    Entries are ints (node splits) or int pairs (edge splits)."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, arr in sections.items():
            fh.write(f"#{name}\n")
            arr = np.asarray(arr, dtype=np.int64)
            if arr.ndim == 1:
                for v in arr:
                    fh.write(f"{v}\n")
            else:
                for row in arr.reshape(-1, 2):
                    fh.write(f"{row[0]}\t{row[1]}\n")


def read_sections(path):
    sections = {}
    current = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.strip()
            if not body:
                continue
            if body.startswith("#"):
                current = body[1:].strip()
                sections[current] = []
                continue
            if current is None:
                raise ParseError(path, line_no, "entry before any '#section' header")
            parts = body.split()
            try:
                sections[current].append([int(p) for p in parts])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer entry {body!r}") from None
    out = {}
    for name, rows in sections.items():
        if not rows:
            out[name] = np.zeros(0, dtype=np.int64)
        elif len(rows[0]) == 1:
            out[name] = np.asarray([r[0] for r in rows], dtype=np.int64)
        else:
            out[name] = np.asarray(rows, dtype=np.int64)
    return out
