"""Checksummed line-record files.

One JSON object per UTF-8 line, with a trailing `crc` field whose value is
the CRC32 (8 hex chars) of every byte of the line that precedes the
`,"crc":"` suffix. Appends are serialized through an advisory lock file
beside the log, so concurrent writers from distinct processes never
interleave bytes; readers are lock-free and stop at the first invalid
line, which makes a torn tail harmless.
"""

from __future__ import annotations

import fcntl
import json
import os
import threading
import zlib
from contextlib import contextmanager
from typing import Any, Iterator, Mapping

_CRC_MARKER = b',"crc":"'


def encode_line(fields: Mapping[str, Any]) -> bytes:
    """Serialize `fields` (insertion order preserved) with a crc suffix."""
    if not fields:
        raise ValueError("cannot encode an empty record")
    body = json.dumps(dict(fields), separators=(",", ":"), ensure_ascii=False)
    prefix = body[:-1].encode("utf-8")  # drop the closing brace; crc covers the rest
    crc = f"{zlib.crc32(prefix) & 0xFFFFFFFF:08x}"
    return prefix + _CRC_MARKER + crc.encode("ascii") + b'"}\n'


def decode_line(raw: bytes) -> dict[str, Any] | None:
    """Parse one log line; None if the line is torn, corrupt or unchecksummed."""
    if not raw.endswith(b"\n"):
        return None
    line = raw[:-1]
    marker = line.rfind(_CRC_MARKER)
    if marker < 0:
        return None
    try:
        obj = json.loads(line)
    except (ValueError, UnicodeDecodeError):
        return None
    if not isinstance(obj, dict):
        return None
    expected = f"{zlib.crc32(line[:marker]) & 0xFFFFFFFF:08x}"
    if obj.pop("crc", None) != expected:
        return None
    return obj


class LineLog:
    """Append-only checksummed line file with cross-process write locking."""

    def __init__(self, path: str, durable: bool = True):
        self.path = str(path)
        self.lock_path = self.path + ".lock"
        self.durable = durable
        self._thread_lock = threading.Lock()
        # O_CREAT makes the file but not its directory.
        parent = os.path.dirname(self.path)
        if parent:
            os.makedirs(parent, exist_ok=True)

    @contextmanager
    def exclusive(self) -> Iterator[None]:
        """Cross-process critical section: in-process lock plus flock."""
        with self._thread_lock:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_RDWR, 0o644)
            try:
                fcntl.flock(fd, fcntl.LOCK_EX)
                yield
            finally:
                fcntl.flock(fd, fcntl.LOCK_UN)
                os.close(fd)

    def append_bytes(self, data: bytes) -> None:
        """Append raw line bytes; call inside exclusive() when order matters."""
        fd = os.open(self.path, os.O_CREAT | os.O_WRONLY | os.O_APPEND, 0o644)
        try:
            os.write(fd, data)
            if self.durable:
                os.fsync(fd)
        finally:
            os.close(fd)

    def size(self) -> int:
        try:
            return os.stat(self.path).st_size
        except FileNotFoundError:
            return 0

    def truncate_to(self, offset: int) -> None:
        fd = os.open(self.path, os.O_WRONLY)
        try:
            os.ftruncate(fd, offset)
        finally:
            os.close(fd)

    def read_valid(self, from_offset: int = 0) -> tuple[list[dict[str, Any]], int]:
        """Read valid records starting at a byte offset.

        Returns (records, end_offset) where end_offset is the byte offset
        just past the last valid line. Scanning stops at the first invalid
        or incomplete line so results are always a clean prefix.
        """
        try:
            with open(self.path, "rb") as fh:
                fh.seek(from_offset)
                data = fh.read()
        except FileNotFoundError:
            return [], from_offset

        records: list[dict[str, Any]] = []
        offset = from_offset
        start = 0
        while True:
            nl = data.find(b"\n", start)
            if nl < 0:
                break
            line = data[start : nl + 1]
            obj = decode_line(line)
            if obj is None:
                break
            records.append(obj)
            start = nl + 1
            offset += len(line)
        return records, offset
