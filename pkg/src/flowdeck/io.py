"""File ingestion: newline-delimited text and two-column CSV."""

from __future__ import annotations

import csv
from pathlib import Path

from .values import Record


def read_text_records(path: str | Path) -> list[Record]:
    """Each line becomes one unkeyed text record (newline stripped)."""
    text = Path(path).read_text(encoding="utf-8")
    return [Record(None, line) for line in text.splitlines()]


def _parse_payload(raw: str):
    try:
        return int(raw)
    except ValueError:
        return raw


def read_csv_records(path: str | Path) -> list[Record]:
    """Two-column key,value CSV.  Keys stay text; values parse as int when possible."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"expected 2 columns, got {len(row)}: {row!r}")
            records.append(Record(row[0], _parse_payload(row[1])))
    return records
