"""Append-only JSON Lines record files with crash recovery and CSV export."""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Callable, Hashable, Iterable, Optional, Sequence

from .errors import CorruptRecord, IoFailure, SchemaMismatch, UnknownColumn

SCHEMA_VERSION = 1

END_OF_PLAN = None


def dumps(record: dict) -> str:
    """Canonical one-line encoding; key order is preserved for byte-stable output."""
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


class RecordFile:
    """A JSONL file of records sharing one ``schema_version``.

    Opening a file quarantines an unterminated trailing line (the only
    artifact a crash mid-append can leave) into ``<path>.partial`` and
    truncates the file back to its last complete record.
    """

    def __init__(self, path, schema_version: int = SCHEMA_VERSION):
        self.path = Path(path)
        self.schema_version = schema_version
        self.records: list[dict] = []
        self.quarantined = b""

    @classmethod
    def open(cls, path, schema_version: Optional[int] = None, create: bool = True) -> "RecordFile":
        path = Path(path)
        rf = cls(path, SCHEMA_VERSION if schema_version is None else schema_version)
        try:
            if not path.exists():
                if not create:
                    raise IoFailure(f"{path} does not exist")
                path.parent.mkdir(parents=True, exist_ok=True)
                path.touch()
                return rf
            data = path.read_bytes()
            cut = data.rfind(b"\n") + 1
            if cut < len(data):
                rf.quarantined = data[cut:]
                with open(path.with_name(path.name + ".partial"), "ab") as side:
                    side.write(rf.quarantined)
                    side.flush()
                    os.fsync(side.fileno())
                with open(path, "r+b") as fh:
                    fh.truncate(cut)
                    fh.flush()
                    os.fsync(fh.fileno())
                data = data[:cut]
        except OSError as exc:
            raise IoFailure(f"cannot open {path}: {exc}") from exc

        for lineno, raw in enumerate(data.decode("utf-8").splitlines(), 1):
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(f"{path}:{lineno}: {exc}") from exc
            if not isinstance(rec, dict):
                raise CorruptRecord(f"{path}:{lineno}: record is not an object")
            version = rec.get("schema_version")
            if schema_version is None and not rf.records:
                rf.schema_version = version
            if version != rf.schema_version:
                raise SchemaMismatch(
                    f"{path}:{lineno}: schema_version {version!r}, expected {rf.schema_version!r}"
                )
            rf.records.append(rec)
        return rf

    @property
    def line_count(self) -> int:
        return len(self.records)

    def append(self, record: dict) -> None:
        append_record(self, record)

    def truncate(self) -> None:
        """Drop every record, leaving an empty file."""
        try:
            with open(self.path, "wb") as fh:
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise IoFailure(f"cannot truncate {self.path}: {exc}") from exc
        self.records.clear()


def append_record(file: RecordFile, record: dict) -> None:
    """Append one record and fsync before returning."""
    version = record.get("schema_version")
    if version != file.schema_version:
        raise SchemaMismatch(
            f"record schema_version {version!r} does not match file's {file.schema_version!r}"
        )
    line = dumps(record) + "\n"
    try:
        with open(file.path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise IoFailure(f"cannot append to {file.path}: {exc}") from exc
    file.records.append(json.loads(line))


def read_records(path) -> list[dict]:
    return RecordFile.open(path, create=False).records


def resume_cursor(file: RecordFile, plan: Sequence, key: Callable[[object], Hashable],
                  record_key: Callable[[dict], Hashable]):
    """First plan item without a durable record, or ``END_OF_PLAN``."""
    done = {record_key(r) for r in file.records}
    for item in plan:
        if key(item) not in done:
            return item
    return END_OF_PLAN


_MISSING = object()


def _lookup(record: dict, path: str):
    cur = record
    for part in path.split("."):
        if isinstance(cur, dict) and part in cur:
            cur = cur[part]
        elif isinstance(cur, list) and part.isdigit() and int(part) < len(cur):
            cur = cur[int(part)]
        else:
            return _MISSING
    return cur


def _cell(value) -> str:
    if value is None or value is _MISSING:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ";".join(_cell(v) if not isinstance(v, (dict, list)) else dumps(v) for v in value)
    if isinstance(value, dict):
        return dumps(value)
    return str(value)


def export_csv(records: Iterable[dict] | RecordFile, columns: Sequence[str],
               crlf: bool = False) -> str:
    """Project records onto dotted ``columns``; one header row plus one row each."""
    if isinstance(records, RecordFile):
        records = records.records
    records = list(records)
    for col in columns:
        if records and all(_lookup(r, col) is _MISSING for r in records):
            raise UnknownColumn(col)
    # a CRLF terminator makes the writer quote cells holding either character;
    # the requested row ending is swapped in afterwards, one row at a time
    end = "\r\n" if crlf else "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    out = []
    for row in [list(columns)] + [[_cell(_lookup(r, c)) for c in columns] for r in records]:
        buf.seek(0)
        buf.truncate()
        writer.writerow(row)
        out.append(buf.getvalue()[:-2] + end)
    return "".join(out)
