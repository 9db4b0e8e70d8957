"""Deterministic synthetic market fixtures for tests and demos.

Everything here is seeded and pure so generated datasets are byte-identical
across machines.
"""

from __future__ import annotations

import csv
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .market_data import AssetSeries, Bar, OHLCV_COLUMNS


def weekday_sessions(start: date, count: int) -> tuple[date, ...]:
    """The first ``count`` weekdays on or after ``start`` (a toy exchange calendar)."""
    sessions: list[date] = []
    day = start
    while len(sessions) < count:
        if day.weekday() < 5:
            sessions.append(day)
        day += timedelta(days=1)
    return tuple(sessions)


def _bar(day: date, close: float, volume: float) -> Bar:
    spread = 0.01 * close
    return Bar(
        date=day,
        open=close,
        high=close + spread,
        low=close - spread,
        close=close,
        adj_close=close,
        volume=volume,
    )


def sawtooth_closes(n: int, period: int = 10, amplitude: float = 0.2, base: float = 100.0) -> np.ndarray:
    """Triangle wave: base at phase 0, peak base*(1+amplitude) at phase period//2."""
    half = period // 2
    phase = np.arange(n) % period
    up = np.minimum(phase, half)
    down = np.maximum(phase - half, 0)
    return base * (1.0 + amplitude * (up - down) / half)


def sawtooth_series(
    symbol: str,
    sessions: tuple[date, ...],
    period: int = 10,
    amplitude: float = 0.2,
    base: float = 100.0,
) -> AssetSeries:
    closes = sawtooth_closes(len(sessions), period=period, amplitude=amplitude, base=base)
    bars = tuple(
        _bar(day, float(c), volume=1000.0 + t) for t, (day, c) in enumerate(zip(sessions, closes))
    )
    return AssetSeries(symbol=symbol, bars=bars)


def random_walk_series(
    symbol: str,
    sessions: tuple[date, ...],
    seed: int,
    base: float = 100.0,
    drift: float = 0.0005,
    sigma: float = 0.01,
) -> AssetSeries:
    rng = np.random.default_rng(seed)
    steps = rng.normal(drift, sigma, size=len(sessions))
    closes = base * np.exp(np.cumsum(steps))
    volumes = rng.integers(500, 5000, size=len(sessions))
    bars = tuple(
        _bar(day, float(c), volume=float(v)) for day, c, v in zip(sessions, closes, volumes)
    )
    return AssetSeries(symbol=symbol, bars=bars)


def write_ohlcv_csv(path: str | Path, series: AssetSeries) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(OHLCV_COLUMNS)
        for b in series.bars:
            writer.writerow(
                [
                    b.date.isoformat(),
                    repr(b.open),
                    repr(b.high),
                    repr(b.low),
                    repr(b.close),
                    repr(b.adj_close),
                    repr(b.volume),
                ]
            )


def write_calendar(path: str | Path, sessions: tuple[date, ...]) -> None:
    Path(path).write_text("".join(d.isoformat() + "\n" for d in sessions), encoding="utf-8")
