"""Embedding and camera-event file formats.

Binary layout (all integers little-endian)::

    header   magic[7] label_mode:u8 dim:u32 count:u32
    record   image_id:str camera_id:u32 frame_index:u32 [label:str] feature:f32[dim]
    str      length:u32 utf-8 bytes

``label_mode`` is 1 when every record carries a person label, 0 when none
does.  Embedding files use the magic ``PRPOOL1``; event streams use
``PREVNT1`` and prefix each record with ``timestamp:u64 confirmed:u8``.

Plain-text variant, for hand-written fixtures: a header line
``#PRPOOL1 dim=<d>`` (optionally ``count=<n>``), then one tab-separated
record per line::

    image_id  camera_id  frame_index  label  v1 ... vd

Event streams use ``#PREVNT1 dim=<d>`` and the columns
``timestamp camera_id frame_index image_id confirmed label v1 ... vd``.
An empty label column means no label.  Blank lines are ignored.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import GalleryEntry, validate_dataset
from .pool import CameraEvent

EMBED_MAGIC = b"PRPOOL1"
EVENT_MAGIC = b"PREVNT1"
_HEADER = struct.Struct("<7sBII")
_U32 = struct.Struct("<I")
_EVENT_PREFIX = struct.Struct("<QB")

PathLike = Union[str, os.PathLike]


class FormatError(ValueError):
    """Malformed embedding or event file; ``record`` is 1-based when known."""

    def __init__(self, message: str, record: Optional[int] = None):
        self.record = record
        super().__init__(f"record {record}: {message}" if record is not None else message)


# -- binary helpers -------------------------------------------------------

class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise EOFError
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return _U32.pack(len(b)) + b


def _label_mode(entries: Sequence[GalleryEntry]) -> int:
    labeled = [e.person_label is not None for e in entries]
    if all(labeled) and entries:
        return 1
    if not any(labeled):
        return 0
    raise ValueError("entries mix labeled and unlabeled records")


def _pack_entry(e: GalleryEntry, labeled: int) -> bytes:
    parts = [_pack_str(e.image_id), _U32.pack(e.camera_id), _U32.pack(e.frame_index)]
    if labeled:
        parts.append(_pack_str(e.person_label))
    parts.append(np.asarray(e.feature, dtype="<f4").tobytes())
    return b"".join(parts)


def _read_entry(r: _Reader, dim: int, labeled: int) -> GalleryEntry:
    image_id = r.string()
    cam, frame = r.u32(), r.u32()
    label = r.string() if labeled else None
    feat = np.frombuffer(r.take(4 * dim), dtype="<f4")
    return GalleryEntry(image_id, cam, frame, feat, label)


def _read_binary(data: bytes, magic: bytes, events: bool):
    if len(data) < _HEADER.size:
        raise FormatError("file shorter than header")
    got, labeled, dim, count = _HEADER.unpack_from(data)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if dim < 1:
        raise FormatError("header dim must be >= 1")
    r = _Reader(data)
    r.pos = _HEADER.size
    out = []
    for k in range(1, count + 1):
        try:
            if events:
                ts, confirmed = _EVENT_PREFIX.unpack(r.take(_EVENT_PREFIX.size))
                out.append((ts, bool(confirmed), _read_entry(r, dim, labeled)))
            else:
                out.append(_read_entry(r, dim, labeled))
        except EOFError:
            raise FormatError(f"truncated file: expected {count} records, record {k} is incomplete",
                              record=k) from None
        except (UnicodeDecodeError, ValueError) as exc:
            raise FormatError(str(exc), record=k) from None
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after {count} records")
    return dim, out


# -- text helpers -----------------------------------------------------------

def _fmt(x: np.float32) -> str:
    # shortest string that parses back to the same float32
    return np.format_float_positional(np.float32(x), unique=True, trim="-") \
        if np.isfinite(x) else str(float(x))


def _parse_header(line: str, magic: bytes, path) -> tuple[int, Optional[int]]:
    tokens = line.strip().split()
    if not tokens or tokens[0] != "#" + magic.decode():
        raise FormatError(f"{path}: bad text header {line.strip()!r}")
    opts = dict(t.split("=", 1) for t in tokens[1:] if "=" in t)
    try:
        dim = int(opts["dim"])
        count = int(opts["count"]) if "count" in opts else None
    except (KeyError, ValueError):
        raise FormatError(f"{path}: text header needs dim=<int>") from None
    if dim < 1:
        raise FormatError("header dim must be >= 1")
    return dim, count


def _read_text(text: str, magic: bytes, events: bool, path):
    lines = text.splitlines()
    dim, count = _parse_header(lines[0] if lines else "", magic, path)
    n_meta = 6 if events else 4
    out = []
    records = [ln for ln in lines[1:] if ln.strip()]
    for k, line in enumerate(records, start=1):
        cols = line.rstrip("\n").split("\t")
        if len(cols) != n_meta + dim:
            raise FormatError(f"expected {dim} feature values, got {len(cols) - n_meta}", record=k)
        try:
            if events:
                ts, cam, frame, image_id, confirmed, label = cols[:6]
                if confirmed not in ("0", "1"):
                    raise ValueError(f"confirmed must be 0 or 1, got {confirmed!r}")
                head = (int(ts), confirmed == "1")
            else:
                image_id, cam, frame, label = cols[:4]
            feat = np.array([float(v) for v in cols[n_meta:]], dtype=np.float32)
            entry = GalleryEntry(image_id, int(cam), int(frame), feat, label or None)
        except ValueError as exc:
            raise FormatError(str(exc), record=k) from None
        out.append((*head, entry) if events else entry)
    if count is not None and count != len(out):
        raise FormatError(f"truncated file: header count {count}, found {len(out)} records",
                          record=len(out) + 1)
    return dim, out


def _read(path: PathLike, magic: bytes, events: bool):
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(b"#"):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: text file is not valid utf-8") from None
        return _read_text(text, magic, events, path)
    return _read_binary(data, magic, events)


# -- public API -------------------------------------------------------------

def load_embeddings(path: PathLike) -> list[GalleryEntry]:
    """Load an embedding file (binary or text), preserving record order."""
    _, entries = _read(path, EMBED_MAGIC, events=False)
    if entries:
        problems = validate_dataset(entries)
        if problems:
            v = problems[0]
            raise FormatError(f"{v.kind} ({v.image_id}): {v.detail}", record=v.index + 1)
    return entries


def save_embeddings(entries: Sequence[GalleryEntry], path: PathLike, text: bool = False) -> None:
    entries = list(entries)
    if entries and validate_dataset(entries):
        raise ValueError(f"refusing to save invalid dataset: {validate_dataset(entries)[0]}")
    dim = entries[0].dim if entries else 1
    if text:
        lines = [f"#PRPOOL1 dim={dim} count={len(entries)}"]
        for e in entries:
            cols = [e.image_id, str(e.camera_id), str(e.frame_index), e.person_label or ""]
            lines.append("\t".join(cols + [_fmt(x) for x in e.feature]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        return
    labeled = _label_mode(entries)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMBED_MAGIC, labeled, dim, len(entries)))
        for e in entries:
            fh.write(_pack_entry(e, labeled))


def load_event_stream(path: PathLike) -> list[CameraEvent]:
    """Load camera events; timestamps must be non-decreasing."""
    _, records = _read(path, EVENT_MAGIC, events=True)
    events, last = [], None
    dims = {rec[2].dim for rec in records}
    if len(dims) > 1:
        raise FormatError(f"mixed feature dims {sorted(dims)}")
    for k, (ts, confirmed, entry) in enumerate(records, start=1):
        if last is not None and ts < last:
            raise FormatError(f"timestamp {ts} earlier than previous {last}", record=k)
        if not np.all(np.isfinite(entry.feature)):
            raise FormatError("non-finite feature value", record=k)
        last = ts
        events.append(CameraEvent(entry, confirmed))
    return events


def save_event_stream(events: Sequence[CameraEvent], path: PathLike,
                      timestamps: Optional[Sequence[int]] = None, text: bool = False) -> None:
    """Write events; timestamps default to 0, 1, 2, ..."""
    events = list(events)
    ts = list(range(len(events))) if timestamps is None else [int(t) for t in timestamps]
    if len(ts) != len(events):
        raise ValueError("one timestamp per event required")
    if any(b < a for a, b in zip(ts, ts[1:])) or any(t < 0 for t in ts):
        raise ValueError("timestamps must be non-negative and non-decreasing")
    entries = [ev.entry for ev in events]
    dim = entries[0].dim if entries else 1
    if text:
        lines = [f"#PREVNT1 dim={dim} count={len(events)}"]
        for t, ev in zip(ts, events):
            e = ev.entry
            cols = [str(t), str(e.camera_id), str(e.frame_index), e.image_id,
                    "1" if ev.is_confirmed else "0", e.person_label or ""]
            lines.append("\t".join(cols + [_fmt(x) for x in e.feature]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        return
    labeled = _label_mode(entries)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EVENT_MAGIC, labeled, dim, len(events)))
        for t, ev in zip(ts, events):
            fh.write(_EVENT_PREFIX.pack(t, int(ev.is_confirmed)))
            fh.write(_pack_entry(ev.entry, labeled))
