"""Shared fixture builders: synthetic bars, panels and CSV files."""

from __future__ import annotations

import sys
from datetime import date
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deeptrader.market_data import AlignedPanel, AssetSeries, Bar, align_calendar
from deeptrader.synthetic import (
    random_walk_series,
    sawtooth_series,
    weekday_sessions,
    write_calendar,
    write_ohlcv_csv,
)


def make_bars(closes, start=date(2020, 1, 6), highs=None, lows=None, volumes=None):
    """Bars on consecutive weekdays with controllable fields around the closes."""
    sessions = weekday_sessions(start, len(closes))
    bars = []
    for t, (day, close) in enumerate(zip(sessions, closes)):
        close = float(close)
        high = float(highs[t]) if highs is not None else close * 1.01
        low = float(lows[t]) if lows is not None else close * 0.99
        volume = float(volumes[t]) if volumes is not None else 1000.0
        bars.append(
            Bar(date=day, open=close, high=high, low=low, close=close, adj_close=close, volume=volume)
        )
    return tuple(bars)


def make_series(symbol, closes, **kwargs) -> AssetSeries:
    return AssetSeries(symbol=symbol, bars=make_bars(closes, **kwargs))


def random_ohlcv(rng: np.random.Generator, n: int):
    """Valid random OHLCV arrays: positive prices, low <= close <= high."""
    close = 100.0 * np.exp(np.cumsum(rng.normal(0.0, 0.02, size=n)))
    high = close * (1.0 + np.abs(rng.normal(0.0, 0.01, size=n)))
    low = close * (1.0 - np.abs(rng.normal(0.0, 0.01, size=n)))
    volume = rng.integers(100, 10_000, size=n).astype(np.float64)
    return high, low, close, volume


def make_panel(n_assets=2, n_dates=80, seed=7, start=date(2019, 1, 7)) -> AlignedPanel:
    sessions = weekday_sessions(start, n_dates)
    series = [
        random_walk_series(f"AS{i}", sessions, seed=seed + i) for i in range(n_assets)
    ]
    return align_calendar(series, sessions)


def make_sawtooth_panel(n_dates=120, period=10, amplitude=0.2, base=100.0) -> AlignedPanel:
    sessions = weekday_sessions(date(2019, 1, 7), n_dates)
    series = [sawtooth_series("SAW", sessions, period=period, amplitude=amplitude, base=base)]
    return align_calendar(series, sessions)


@pytest.fixture
def panel() -> AlignedPanel:
    return make_panel()


@pytest.fixture
def dataset_dir(tmp_path: Path) -> Path:
    """Two random-walk assets plus calendar on disk, ready for the CLI."""
    sessions = weekday_sessions(date(2019, 1, 7), 90)
    for i, symbol in enumerate(("AAA", "BBB")):
        write_ohlcv_csv(tmp_path / f"{symbol}.csv", random_walk_series(symbol, sessions, seed=11 + i))
    write_calendar(tmp_path / "calendar.txt", sessions)
    return tmp_path
