"""OHLCV ingestion, trading-calendar alignment and train/test splitting."""

from __future__ import annotations

import csv
from bisect import bisect_left
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

OHLCV_COLUMNS = ("Date", "Open", "High", "Low", "Close", "Adj Close", "Volume")

PRICE_FIELDS = ("close", "adj_close")


class DataError(Exception):
    """Malformed or inconsistent market-data input.

    ``row`` is the 1-based data-row number (header excluded) when the
    problem is attributable to a single row.
    """

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


class MissingColumnError(DataError):
    pass


class MalformedValueError(DataError):
    pass


class NonPositivePriceError(DataError):
    pass


class DuplicateDateError(DataError):
    pass


class NonMonotonicDateError(DataError):
    pass


class BarRangeError(DataError):
    pass


@dataclass(frozen=True, slots=True)
class Bar:
    """One daily OHLCV record. Prices are positive; low <= open/close <= high."""

    date: date
    open: float
    high: float
    low: float
    close: float
    adj_close: float
    volume: float


@dataclass(frozen=True, slots=True)
class AssetSeries:
    """One asset's bar history, strictly increasing by date."""

    symbol: str
    bars: tuple[Bar, ...]

    @property
    def dates(self) -> tuple[date, ...]:
        return tuple(bar.date for bar in self.bars)

    def __len__(self) -> int:
        return len(self.bars)


@dataclass(frozen=True, slots=True)
class AlignedPanel:
    """N assets over a shared date vector; every asset has a bar on every date."""

    symbols: tuple[str, ...]
    dates: tuple[date, ...]
    bars: tuple[tuple[Bar, ...], ...]  # indexed [asset][time]

    @property
    def n_assets(self) -> int:
        return len(self.symbols)

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    def field(self, name: str) -> np.ndarray:
        """Return an (N, T) float array of one bar field ('close', 'high', ...)."""
        return np.array(
            [[getattr(bar, name) for bar in series] for series in self.bars],
            dtype=np.float64,
        )

    def prices(self, price_field: str = "adj_close") -> np.ndarray:
        """The (N, T) trading-price matrix selected by ``price_field``."""
        if price_field not in PRICE_FIELDS:
            raise ValueError(f"price_field must be one of {PRICE_FIELDS}, got {price_field!r}")
        return self.field(price_field)

    def series(self, symbol: str) -> AssetSeries:
        idx = self.symbols.index(symbol)
        return AssetSeries(symbol=symbol, bars=self.bars[idx])

    def to_series(self) -> list[AssetSeries]:
        return [AssetSeries(symbol=s, bars=b) for s, b in zip(self.symbols, self.bars)]


def _parse_positive_price(raw: str, column: str, row: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise MalformedValueError(f"column {column!r}: cannot parse {raw!r}", row=row) from None
    if not np.isfinite(value):
        raise MalformedValueError(f"column {column!r}: non-finite value {raw!r}", row=row)
    if value <= 0:
        raise NonPositivePriceError(f"column {column!r}: price {value} is not positive", row=row)
    return value


def load_ohlcv(path: str | Path, symbol: str) -> AssetSeries:
    """Parse one asset's OHLCV CSV (Yahoo-style 7-column header) into an AssetSeries."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")

    bars: list[Bar] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise MissingColumnError(f"{path}: empty file, expected header {OHLCV_COLUMNS}")
        missing = [c for c in OHLCV_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise MissingColumnError(f"{path}: missing columns {missing}")

        prev_date: date | None = None
        for row_num, row in enumerate(reader, start=1):
            try:
                bar_date = date.fromisoformat(row["Date"].strip())
            except ValueError:
                raise MalformedValueError(
                    f"column 'Date': cannot parse {row['Date']!r}", row=row_num
                ) from None
            if prev_date is not None:
                if bar_date == prev_date:
                    raise DuplicateDateError(f"duplicate date {bar_date}", row=row_num)
                if bar_date < prev_date:
                    raise NonMonotonicDateError(
                        f"date {bar_date} precedes previous row {prev_date}", row=row_num
                    )
            prev_date = bar_date

            open_ = _parse_positive_price(row["Open"], "Open", row_num)
            high = _parse_positive_price(row["High"], "High", row_num)
            low = _parse_positive_price(row["Low"], "Low", row_num)
            close = _parse_positive_price(row["Close"], "Close", row_num)
            adj_close = _parse_positive_price(row["Adj Close"], "Adj Close", row_num)
            try:
                volume = float(row["Volume"])
            except ValueError:
                raise MalformedValueError(
                    f"column 'Volume': cannot parse {row['Volume']!r}", row=row_num
                ) from None
            if volume < 0:
                raise MalformedValueError(f"column 'Volume': negative volume {volume}", row=row_num)
            if not (low <= open_ <= high and low <= close <= high):
                raise BarRangeError(
                    f"OHLC out of range: open={open_} high={high} low={low} close={close}",
                    row=row_num,
                )
            bars.append(
                Bar(
                    date=bar_date,
                    open=open_,
                    high=high,
                    low=low,
                    close=close,
                    adj_close=adj_close,
                    volume=volume,
                )
            )

    if not bars:
        raise DataError(f"{path}: no data rows")
    return AssetSeries(symbol=symbol, bars=tuple(bars))


def load_calendar(path: str | Path) -> tuple[date, ...]:
    """Load a session-list calendar file: one ISO date per line, blank lines ignored."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such calendar file: {path}")
    sessions: list[date] = []
    for line_num, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.strip()
        if not text:
            continue
        try:
            sessions.append(date.fromisoformat(text))
        except ValueError:
            raise MalformedValueError(f"calendar: cannot parse {text!r}", row=line_num) from None
    if sessions != sorted(set(sessions)):
        raise DataError(f"{path}: calendar dates must be strictly increasing and unique")
    return tuple(sessions)


def align_calendar(series: list[AssetSeries], calendar: tuple[date, ...] | frozenset[date] | set[date]) -> AlignedPanel:
    """Intersect all series' dates with the calendar sessions into an equal-length panel."""
    if not series:
        raise DataError("align_calendar requires at least one series")
    sessions = frozenset(calendar)
    common = set.intersection(*(set(s.dates) for s in series)) & sessions
    if not common:
        raise DataError("empty date intersection: no shared calendar sessions across assets")
    dates = tuple(sorted(common))

    grid: list[tuple[Bar, ...]] = []
    for asset in series:
        by_date = {bar.date: bar for bar in asset.bars}
        grid.append(tuple(by_date[d] for d in dates))
    return AlignedPanel(
        symbols=tuple(s.symbol for s in series),
        dates=dates,
        bars=tuple(grid),
    )


def split(panel: AlignedPanel, boundary: date) -> tuple[AlignedPanel, AlignedPanel]:
    """Split into (dates < boundary, dates >= boundary); both halves must be nonempty."""
    cut = bisect_left(panel.dates, boundary)
    if cut == 0:
        raise DataError(f"split boundary {boundary} leaves an empty train panel")
    if cut == len(panel.dates):
        raise DataError(f"split boundary {boundary} leaves an empty test panel")
    train = AlignedPanel(
        symbols=panel.symbols,
        dates=panel.dates[:cut],
        bars=tuple(series[:cut] for series in panel.bars),
    )
    test = AlignedPanel(
        symbols=panel.symbols,
        dates=panel.dates[cut:],
        bars=tuple(series[cut:] for series in panel.bars),
    )
    return train, test
