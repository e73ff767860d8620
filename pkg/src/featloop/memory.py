"""The joint memory store: an append-only log of ScoreRecords.

This is the only shared state between agents. Writers (any number of
processes on a shared filesystem) serialize through the lock file; readers
never take the lock and simply skip an invalid tail. Sequence numbers are
assigned under the write lock, so records on disk are totally ordered with
no gaps.
"""

from __future__ import annotations

import os
from dataclasses import replace
from typing import Any

from .core import ScoreRecord, STATUS_OK
from .logio import LineLog, encode_line

RECORD_FIELDS = (
    "seq",
    "prompt_id",
    "prompt_text",
    "agent_id",
    "baseline_rig",
    "extended_rig",
    "relative_score",
    "eval_size",
    "repeats",
    "status",
    "created_at",
)


class StorageUnavailable(RuntimeError):
    """The backing log cannot be read or written."""


def record_to_fields(record: ScoreRecord) -> dict[str, Any]:
    return {name: getattr(record, name) for name in RECORD_FIELDS}


def record_from_fields(fields: dict[str, Any]) -> ScoreRecord:
    kwargs = {name: fields[name] for name in RECORD_FIELDS}
    return ScoreRecord(**kwargs)


class MemoryStore:
    """Multi-process-safe prompt-score log with best/worst retrieval."""

    def __init__(self, path: str, durable: bool = True):
        self._log = LineLog(path, durable=durable)
        # Validated-prefix cache so repeated appends only scan new bytes.
        # Sequence numbers start at 1; 0 means "empty store" to cursors.
        self._scan_offset = 0
        self._last_seq = 0

    @property
    def path(self) -> str:
        return self._log.path

    def append(self, record: ScoreRecord) -> int:
        """Durably append `record`, assigning the next sequence number.

        A corrupt tail left by a crashed writer is truncated to the last
        valid record before the new line goes in.
        """
        try:
            with self._log.exclusive():
                self._refresh_locked(repair=True)
                seq = self._last_seq + 1
                stored = replace(record, seq=seq)
                line = encode_line(record_to_fields(stored))
                self._log.append_bytes(line)
                self._scan_offset += len(line)
                self._last_seq = seq
                return seq
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def _refresh_locked(self, repair: bool) -> None:
        """Re-derive (offset, last seq) after other writers may have run."""
        size = self._log.size()
        if size < self._scan_offset:
            # File shrank underneath us (external truncation): rescan fully.
            self._scan_offset = 0
            self._last_seq = 0
        if size == self._scan_offset:
            return
        records, end = self._log.read_valid(self._scan_offset)
        for fields in records:
            seq = fields.get("seq")
            if seq != self._last_seq + 1:
                raise StorageUnavailable(
                    f"sequence discontinuity at seq={seq!r} after {self._last_seq}"
                )
            self._last_seq = seq
        self._scan_offset = end
        if repair and end < self._log.size():
            # Torn or corrupt tail: drop it so the next record starts clean.
            self._log.truncate_to(end)

    def read_since(self, seq: int) -> list[ScoreRecord]:
        """All records with sequence > seq, in order (prefix-consistent)."""
        return [r for r in self._read_all() if r.seq > seq]

    def read_all(self) -> list[ScoreRecord]:
        return self._read_all()

    def _read_all(self) -> list[ScoreRecord]:
        try:
            fields_list, _ = self._log.read_valid(0)
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc
        records = []
        last = 0
        for fields in fields_list:
            try:
                record = record_from_fields(fields)
            except (KeyError, TypeError, ValueError):
                break
            if record.seq != last + 1:
                break
            last = record.seq
            records.append(record)
        return records

    def last_seq(self) -> int:
        records = self._read_all()
        return records[-1].seq if records else 0

    def _ok_records(self) -> list[ScoreRecord]:
        return [r for r in self._read_all() if r.status == STATUS_OK]

    def top_k(self, k: int) -> list[ScoreRecord]:
        """k ok records with the highest relative_score; older wins ties."""
        ranked = sorted(self._ok_records(), key=lambda r: (-r.relative_score, r.seq))
        return ranked[: max(k, 0)]

    def bottom_k(self, k: int) -> list[ScoreRecord]:
        """k ok records with the lowest relative_score; older wins ties."""
        ranked = sorted(self._ok_records(), key=lambda r: (r.relative_score, r.seq))
        return ranked[: max(k, 0)]

    def contains(self, prompt_id: str) -> bool:
        return any(r.prompt_id == prompt_id for r in self._read_all())

    def wipe_cache(self) -> None:
        """Forget the validated-prefix cache (tests simulate crashes with this)."""
        self._scan_offset = 0
        self._last_seq = 0


def open_store(path: str, durable: bool = True) -> MemoryStore:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise StorageUnavailable(f"no such directory: {parent}")
    return MemoryStore(path, durable=durable)
