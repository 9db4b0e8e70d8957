"""Per-asset daily sentiment scores from pre-scored news headlines.

The scorer component delivers one CSV row per headline with class
probabilities; this module matches headlines to assets by keyword and
collapses each (asset, day) into a score in {-1, 0, 1}.
"""

from __future__ import annotations

import csv
import json
import re
from bisect import bisect_left
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .market_data import AlignedPanel, DataError, MalformedValueError

PROB_SUM_TOLERANCE = 1e-6

SCORED_HEADLINE_COLUMNS = ("date", "text", "p_pos", "p_neg", "p_neu")


@dataclass(frozen=True, slots=True)
class ScoredHeadline:
    date: date
    text: str
    p_pos: float
    p_neg: float
    p_neu: float


@dataclass(frozen=True)
class SentimentSeries:
    """Scores in {-1, 0, 1} for every (asset, panel date)."""

    symbols: tuple[str, ...]
    dates: tuple[date, ...]
    scores: np.ndarray  # (N, T) int64

    def score(self, symbol: str, day: date) -> int:
        return int(self.scores[self.symbols.index(symbol), self.dates.index(day)])


def _validate_probabilities(p_pos: float, p_neg: float, p_neu: float, row: int | None) -> None:
    if min(p_pos, p_neg, p_neu) < 0:
        raise MalformedValueError("negative sentiment probability", row=row)
    total = p_pos + p_neg + p_neu
    if abs(total - 1.0) > PROB_SUM_TOLERANCE:
        raise MalformedValueError(f"sentiment probabilities sum to {total}, expected 1", row=row)


def load_scored_headlines(path: str | Path) -> list[ScoredHeadline]:
    """Read the scored-headline CSV contract: date,text,p_pos,p_neg,p_neu."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    headlines: list[ScoredHeadline] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = [c for c in SCORED_HEADLINE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for row_num, row in enumerate(reader, start=1):
            try:
                day = date.fromisoformat(row["date"].strip())
            except ValueError:
                raise MalformedValueError(f"cannot parse date {row['date']!r}", row=row_num) from None
            try:
                p_pos, p_neg, p_neu = (float(row[k]) for k in ("p_pos", "p_neg", "p_neu"))
            except ValueError:
                raise MalformedValueError("cannot parse probability", row=row_num) from None
            _validate_probabilities(p_pos, p_neg, p_neu, row_num)
            headlines.append(
                ScoredHeadline(date=day, text=row["text"], p_pos=p_pos, p_neg=p_neg, p_neu=p_neu)
            )
    return headlines


def load_keyword_map(path: str | Path) -> dict[str, list[str]]:
    """Read the keyword map: JSON object mapping ticker to a nonempty list of match strings."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise DataError(f"{path}: keyword map must be a JSON object")
    keywords: dict[str, list[str]] = {}
    for symbol, words in raw.items():
        if not isinstance(words, list) or not words or not all(isinstance(w, str) and w for w in words):
            raise DataError(f"{path}: keywords for {symbol!r} must be a nonempty list of strings")
        keywords[symbol] = list(words)
    return keywords


def _keyword_pattern(keywords: list[str]) -> re.Pattern[str]:
    # Word-boundary guards so 'msft' does not match inside 'MSFTX'.
    alternatives = "|".join(re.escape(word) for word in keywords)
    return re.compile(rf"(?<!\w)(?:{alternatives})(?!\w)", re.IGNORECASE)


def match_headlines(
    headlines: list[ScoredHeadline],
    keywords: dict[str, list[str]],
    asset: str,
    day: date,
) -> list[ScoredHeadline]:
    """Headlines of that day whose text contains any asset keyword on word boundaries."""
    if asset not in keywords:
        raise KeyError(f"no keywords configured for asset {asset!r}")
    pattern = _keyword_pattern(keywords[asset])
    return [h for h in headlines if h.date == day and pattern.search(h.text)]


def daily_score(matched: list[ScoredHeadline]) -> int:
    """Collapse one asset-day's matched headlines into a score.

    No headlines -> 0. Otherwise 1 when the mean positive probability exceeds
    the mean negative probability, -1 otherwise (ties score -1). Neutral
    probabilities are ignored.
    """
    if not matched:
        return 0
    mean_pos = sum(h.p_pos for h in matched) / len(matched)
    mean_neg = sum(h.p_neg for h in matched) / len(matched)
    return 1 if mean_pos > mean_neg else -1


def build_series(
    headlines: list[ScoredHeadline],
    keywords: dict[str, list[str]],
    panel: AlignedPanel,
) -> SentimentSeries:
    """Materialize the per-asset, per-session score grid for the panel.

    Headlines dated on non-session days attach to the next session; headlines
    after the last session are dropped.
    """
    dates = panel.dates
    session_index = {d: t for t, d in enumerate(dates)}

    # Bucket headlines by effective session index.
    buckets: list[list[ScoredHeadline]] = [[] for _ in dates]
    for headline in headlines:
        t = session_index.get(headline.date)
        if t is None:
            t = bisect_left(dates, headline.date)
            if t == len(dates):
                continue
        buckets[t].append(headline)

    patterns = {symbol: _keyword_pattern(keywords[symbol]) for symbol in panel.symbols if symbol in keywords}
    missing = [symbol for symbol in panel.symbols if symbol not in patterns]
    if missing:
        raise KeyError(f"no keywords configured for assets {missing}")

    scores = np.zeros((panel.n_assets, panel.n_dates), dtype=np.int64)
    for i, symbol in enumerate(panel.symbols):
        pattern = patterns[symbol]
        for t, bucket in enumerate(buckets):
            if not bucket:
                continue
            matched = [h for h in bucket if pattern.search(h.text)]
            scores[i, t] = daily_score(matched)
    return SentimentSeries(symbols=panel.symbols, dates=dates, scores=scores)


def write_scored_headlines(path: str | Path, headlines: list[ScoredHeadline]) -> None:
    """Write the scored-headline CSV contract (used by fixtures and the cache)."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SCORED_HEADLINE_COLUMNS)
        for h in headlines:
            writer.writerow([h.date.isoformat(), h.text, repr(h.p_pos), repr(h.p_neg), repr(h.p_neu)])
