"""Append-only write-ahead log, one file per queue.

Frame layout: ``[length u32 BE][crc32 u32 BE][record bytes]``.  Records are
small JSON objects: ``{"k":"p","i":<id>,"t":<iso>,"b":<base64 body>}`` for a
publish, ``{"k":"a","i":<id>}`` for an acknowledgement.

Recovery rules: a torn record at the physical end of the file is truncated
and logged (the write was cut mid-append); an invalid record with valid data
after it means the log is corrupt and recovery fails.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

from ..errors import BrokerStorageFailure, CorruptLog

log = logging.getLogger(__name__)

_HEADER = struct.Struct(">II")
_MAX_RECORD = 64 * 1024 * 1024


@dataclass(frozen=True)
class PublishRecord:
    message_id: int
    body: bytes
    enqueued_at: str


@dataclass(frozen=True)
class AckRecord:
    message_id: int


def _frame(record: dict) -> bytes:
    payload = json.dumps(record, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(len(payload), zlib.crc32(payload)) + payload


def _decode(payload: bytes, where: str) -> PublishRecord | AckRecord:
    try:
        doc = json.loads(payload)
        kind = doc["k"]
        if kind == "p":
            return PublishRecord(
                message_id=int(doc["i"]),
                body=base64.b64decode(doc["b"]),
                enqueued_at=doc["t"],
            )
        if kind == "a":
            return AckRecord(message_id=int(doc["i"]))
        raise KeyError(kind)
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptLog(f"{where}: undecodable record: {exc}") from exc


def fsync_dir(path: Path) -> None:
    """Flush directory metadata so file create/rename/unlink survive a crash."""
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def scan_log(path: Path) -> tuple[list[PublishRecord | AckRecord], int | None]:
    """Read all valid records; return them plus a truncation offset for a torn tail.

    Raises CorruptLog when an invalid record is followed by more data.
    """
    records: list[PublishRecord | AckRecord] = []
    size = path.stat().st_size
    with open(path, "rb") as f:
        offset = 0
        while offset < size:
            header = f.read(_HEADER.size)
            if len(header) < _HEADER.size:
                return records, offset
            length, crc = _HEADER.unpack(header)
            frame_end = offset + _HEADER.size + length
            if length > _MAX_RECORD or frame_end > size:
                # record extends past EOF: torn tail
                return records, offset
            payload = f.read(length)
            if zlib.crc32(payload) != crc:
                if frame_end == size:
                    return records, offset  # last frame, partially flushed
                raise CorruptLog(f"{path}: crc mismatch at offset {offset}")
            records.append(_decode(payload, f"{path} offset {offset}"))
            offset = frame_end
    return records, None


class QueueLog:
    """Durable frame appender for one queue.

    Append methods fsync before returning; callers treat a return as a
    durability acknowledgement.  Not thread-safe: the owning queue serializes
    access (that serialization is what defines FIFO order).
    """

    def __init__(self, path: Path):
        self.path = path
        existed = path.exists()
        self._f = open(path, "ab")
        if not existed:
            fsync_dir(path.parent)

    @classmethod
    def recover(cls, path: Path) -> tuple["QueueLog", list[PublishRecord | AckRecord]]:
        """Open an existing log, truncating a torn tail if one exists."""
        records, truncate_at = scan_log(path)
        if truncate_at is not None:
            log.warning("%s: truncating torn tail at offset %d", path, truncate_at)
            with open(path, "r+b") as f:
                f.truncate(truncate_at)
                f.flush()
                os.fsync(f.fileno())
        return cls(path), records

    def _append(self, frame: bytes) -> None:
        try:
            self._f.write(frame)
            self._f.flush()
            os.fsync(self._f.fileno())
        except OSError as exc:
            raise BrokerStorageFailure(f"{self.path}: append failed: {exc}") from exc

    def append_publish(self, message_id: int, body: bytes, enqueued_at: str) -> None:
        self._append(_frame({
            "k": "p",
            "i": message_id,
            "t": enqueued_at,
            "b": base64.b64encode(body).decode("ascii"),
        }))

    def append_ack(self, message_id: int) -> None:
        self._append(_frame({"k": "a", "i": message_id}))

    def rewrite(self, entries: list[tuple[int, bytes, str]]) -> None:
        """Compaction: atomically replace the log with just the live publishes."""
        tmp = self.path.with_suffix(".log.tmp")
        with open(tmp, "wb") as f:
            for message_id, body, enqueued_at in entries:
                f.write(_frame({
                    "k": "p",
                    "i": message_id,
                    "t": enqueued_at,
                    "b": base64.b64encode(body).decode("ascii"),
                }))
            f.flush()
            os.fsync(f.fileno())
        self._f.close()
        os.replace(tmp, self.path)
        fsync_dir(self.path.parent)
        self._f = open(self.path, "ab")

    def close(self) -> None:
        if not self._f.closed:
            self._f.close()

    def delete(self) -> None:
        self.close()
        self.path.unlink(missing_ok=True)
        fsync_dir(self.path.parent)
