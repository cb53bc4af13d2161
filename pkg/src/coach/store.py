"""Append-only line-delimited JSON log with replay and torn-write recovery.

One record per line: {"kind", "seq", "ts", "payload"}. Appends are single
writes with fsync; a corrupt tail (torn final write) is truncated away with a
warning at load, keeping all complete records.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import WorkbenchError

logger = logging.getLogger(__name__)

RECORD_KINDS = ("response", "annotation", "consensus", "report")


class StoreError(WorkbenchError):
    """Store misuse or unrecoverable corruption."""


@dataclass(frozen=True)
class StoreRecord:
    kind: str
    payload: dict
    sequence_number: int
    timestamp: str


def utc_now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


class Store:
    """Single-writer append-only log; reads replay the file."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._records: list[StoreRecord] = []
        self._load()

    def _load(self) -> None:
        self._records = []
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        offset = 0
        valid_end = 0
        for raw_line in data.split(b"\n"):
            line_end = offset + len(raw_line)
            if raw_line.strip():
                try:
                    obj = json.loads(raw_line.decode("utf-8"))
                    record = StoreRecord(
                        kind=obj["kind"], payload=obj["payload"],
                        sequence_number=obj["seq"], timestamp=obj["ts"],
                    )
                    if record.kind not in RECORD_KINDS:
                        raise ValueError(f"unknown record kind {record.kind!r}")
                except (ValueError, KeyError, UnicodeDecodeError) as exc:
                    logger.warning(
                        "store %s: corrupt record at byte %d (%s); truncating %d bytes",
                        self.path, offset, exc, len(data) - valid_end)
                    with open(self.path, "r+b") as fh:
                        fh.truncate(valid_end)
                    return
                self._records.append(record)
                valid_end = line_end + 1  # past the newline
            offset = line_end + 1

    def records(self, kind: str | None = None) -> list[StoreRecord]:
        if kind is None:
            return list(self._records)
        return [r for r in self._records if r.kind == kind]

    def append(self, kind: str, payload: dict, timestamp: str | None = None) -> StoreRecord:
        if kind not in RECORD_KINDS:
            raise StoreError(f"unknown record kind {kind!r}")
        seq = self._records[-1].sequence_number + 1 if self._records else 1
        record = StoreRecord(kind=kind, payload=payload, sequence_number=seq,
                             timestamp=timestamp or utc_now())
        line = json.dumps(
            {"kind": record.kind, "seq": record.sequence_number,
             "ts": record.timestamp, "payload": record.payload},
            ensure_ascii=False, sort_keys=True,
        ) + "\n"
        encoded = line.encode("utf-8")
        fd = os.open(self.path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
        try:
            os.write(fd, encoded)
            os.fsync(fd)
        finally:
            os.close(fd)
        self._records.append(record)
        return record
