"""The scoring ETL: raw headline CSV in, scored headline CSV out.

Output schema is the consumer contract, byte for byte:
``date,text,p_pos,p_neg,p_neu`` with ISO dates and quoted text.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .models import SentimentModel

RAW_COLUMNS = ("date", "text")

OUTPUT_COLUMNS = ("date", "text", "p_pos", "p_neg", "p_neu")


class InputError(Exception):
    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


@dataclass(frozen=True, slots=True)
class RawHeadline:
    date: date
    text: str
    source: str = ""


def read_raw_headlines(path: str | Path) -> list[RawHeadline]:
    """Parse the raw headline CSV: columns date,text with an optional source."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    rows: list[RawHeadline] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file, expected header date,text[,source]")
        missing = [c for c in RAW_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        for row_num, row in enumerate(reader, start=1):
            try:
                day = date.fromisoformat(row["date"].strip())
            except ValueError:
                raise InputError(f"cannot parse date {row['date']!r}", row=row_num) from None
            text = row["text"]
            if not text or not text.strip():
                raise InputError("empty headline text", row=row_num)
            rows.append(RawHeadline(date=day, text=text, source=row.get("source") or ""))
    return rows


def score_file(
    input_path: str | Path,
    output_path: str | Path,
    model: SentimentModel,
    batch_size: int = 64,
) -> int:
    """Score every input headline and write the scored CSV; returns the row count."""
    headlines = read_raw_headlines(input_path)
    with Path(output_path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(OUTPUT_COLUMNS)
        for start in range(0, len(headlines), batch_size):
            batch = headlines[start : start + batch_size]
            scores = model.score_batch([h.text for h in batch])
            if len(scores) != len(batch):
                raise RuntimeError("model returned a different number of scores than inputs")
            for headline, (p_pos, p_neg, p_neu) in zip(batch, scores):
                writer.writerow(
                    [headline.date.isoformat(), headline.text, repr(p_pos), repr(p_neg), repr(p_neu)]
                )
    return len(headlines)
