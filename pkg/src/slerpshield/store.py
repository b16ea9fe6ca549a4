"""Persistent enrollment store: a single self-describing binary file.

Layout (little-endian throughout):

    magic   4 bytes  b"SSTS"
    u32     format version (1)
    u32     d, u32 m
    f64     alpha, f64 beta
    u8      dropout mode (0 random, 1 weighted)
    i64     created_utc (epoch seconds)
    u32     record count
    records, each:
        u16  label byte length, then UTF-8 label
        d*f64 protected values
        ceil(d/8) bytes packed kept-mask bits (big-endian bit order)
        d*f64 key values
        m*f64 group weights

Floats are stored as raw IEEE-754 bytes, so save -> load -> save reproduces
the file bit for bit. A human-readable sidecar (<path>.header.json) mirrors
the header for inspection; only the binary file is authoritative.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StoreFormatError
from .matching import EnrollmentRecord
from .protection import DropoutMask, KeyTemplate, ProtectedTemplate, ProtectionParams
from .templates import GroupLayout, GroupWeights

MAGIC = b"SSTS"
FORMAT_VERSION = 1

_MODE_CODES = {"random": 0, "weighted": 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


@dataclass(eq=False)
class TemplateStore:
    params: ProtectionParams
    created_utc: int
    records: list[EnrollmentRecord]

    @property
    def layout(self) -> GroupLayout:
        return self.params.layout


def _pack_mask(kept: np.ndarray) -> bytes:
    return np.packbits(kept.astype(np.uint8)).tobytes()


def _unpack_mask(raw: bytes, layout: GroupLayout) -> DropoutMask:
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[: layout.d]
    kept = bits.astype(bool)
    counts = np.sum(~kept.reshape(layout.m, layout.group_dim), axis=1)
    return DropoutMask(kept, counts, layout)


def save_store(store: TemplateStore, path) -> None:
    """Serialize the store; refuses records inconsistent with its params."""
    params = store.params
    layout = params.layout
    expected = params.fingerprint()
    chunks = [
        MAGIC,
        struct.pack(
            "<IIIddBqI",
            FORMAT_VERSION,
            layout.d,
            layout.m,
            params.alpha,
            params.beta,
            _MODE_CODES[params.dropout_mode],
            store.created_utc,
            len(store.records),
        ),
    ]
    for rec in store.records:
        if rec.protected.params_fingerprint != expected:
            raise StoreFormatError(
                f"record {rec.identity_label!r} was protected under different params"
            )
        if rec.protected.layout != layout or rec.key.layout != layout:
            raise StoreFormatError(f"record {rec.identity_label!r} layout mismatch")
        label = rec.identity_label.encode("utf-8")
        if len(label) > 0xFFFF:
            raise StoreFormatError("identity label too long")
        chunks.append(struct.pack("<H", len(label)))
        chunks.append(label)
        chunks.append(np.ascontiguousarray(rec.protected.values, dtype="<f8").tobytes())
        chunks.append(_pack_mask(rec.protected.mask.kept))
        chunks.append(np.ascontiguousarray(rec.key.values, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(rec.protected.weights.w, dtype="<f8").tobytes())

    path = Path(path)
    path.write_bytes(b"".join(chunks))
    sidecar = {
        "format_version": FORMAT_VERSION,
        "d": layout.d,
        "m": layout.m,
        "alpha": params.alpha,
        "beta": params.beta,
        "dropout_mode": params.dropout_mode,
        "created_utc": store.created_utc,
        "n_records": len(store.records),
        "params_fingerprint": expected,
    }
    Path(str(path) + ".header.json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_store(path) -> TemplateStore:
    """Parse and validate a store file; any inconsistency is a StoreFormatError."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise StoreFormatError("not a template store (bad magic)")
    header = struct.Struct("<IIIddBqI")
    if len(raw) < 4 + header.size:
        raise StoreFormatError("truncated header")
    version, d, m, alpha, beta, mode_code, created, n_records = header.unpack_from(raw, 4)
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"unsupported format version {version}")
    if mode_code not in _MODE_NAMES:
        raise StoreFormatError(f"unknown dropout mode code {mode_code}")
    try:
        layout = GroupLayout(d, m)
        params = ProtectionParams(alpha, beta, layout, _MODE_NAMES[mode_code])
    except ValueError as exc:
        raise StoreFormatError(f"invalid header parameters: {exc}") from exc

    fingerprint = params.fingerprint()
    mask_bytes = (d + 7) // 8
    records = []
    offset = 4 + header.size
    for _ in range(n_records):
        if offset + 2 > len(raw):
            raise StoreFormatError("truncated record header")
        (label_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        need = label_len + 8 * d + mask_bytes + 8 * d + 8 * m
        if offset + need > len(raw):
            raise StoreFormatError("truncated record body")
        label = raw[offset : offset + label_len].decode("utf-8")
        offset += label_len
        values = np.frombuffer(raw, dtype="<f8", count=d, offset=offset).copy()
        offset += 8 * d
        mask = _unpack_mask(raw[offset : offset + mask_bytes], layout)
        offset += mask_bytes
        key_values = np.frombuffer(raw, dtype="<f8", count=d, offset=offset).copy()
        offset += 8 * d
        weights_w = np.frombuffer(raw, dtype="<f8", count=m, offset=offset).copy()
        offset += 8 * m
        if np.any(values[~mask.kept] != 0.0):
            raise StoreFormatError(f"record {label!r} has nonzero dropped coordinates")
        try:
            weights = GroupWeights(weights_w)
        except ValueError as exc:
            raise StoreFormatError(f"record {label!r} has invalid weights: {exc}") from exc
        protected = ProtectedTemplate(values, mask, weights, layout, fingerprint)
        records.append(EnrollmentRecord(label, protected, KeyTemplate(key_values, layout)))
    if offset != len(raw):
        raise StoreFormatError(f"{len(raw) - offset} trailing bytes after last record")
    return TemplateStore(params, created, records)
