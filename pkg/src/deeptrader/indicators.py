"""The ten technical indicators that feed the per-asset market-signal vector.

Every function takes 1-D float arrays for a single asset, returns an array of
the same length, and marks positions inside its own warm-up with NaN.
``compute_block`` applies the unified warm-up mask max(26, w+1) so that all
ten series are finite from the same index onward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market_data import AlignedPanel

MACD_FAST = 12
MACD_SLOW = 26

# Fixed slot order of the per-asset indicator vector.
INDICATOR_NAMES = (
    "rsi",
    "sma",
    "ema",
    "stoch_k",
    "macd",
    "ad",
    "obv",
    "roc",
    "williams_r",
    "disparity",
)


def warmup_length(w: int) -> int:
    """Number of leading panel rows without a full indicator vector."""
    return max(MACD_SLOW, w + 1)


def _check_window(length: int, w: int, need: int) -> None:
    if w < 1:
        raise ValueError(f"window must be >= 1, got {w}")
    if length < need:
        raise ValueError(f"series of length {length} is too short for window {w}")


def sma(close: np.ndarray, w: int) -> np.ndarray:
    """Simple moving average over the trailing window."""
    close = np.asarray(close, dtype=np.float64)
    _check_window(len(close), w, w)
    out = np.full(len(close), np.nan)
    windows = np.lib.stride_tricks.sliding_window_view(close, w)
    out[w - 1 :] = windows.mean(axis=-1)
    return out


def ema(close: np.ndarray, w: int) -> np.ndarray:
    """Exponential moving average, seeded with the SMA of the first w points."""
    close = np.asarray(close, dtype=np.float64)
    _check_window(len(close), w, w)
    out = np.full(len(close), np.nan)
    k = 2.0 / (w + 1.0)
    out[w - 1] = close[:w].mean()
    for t in range(w, len(close)):
        out[t] = k * close[t] + (1.0 - k) * out[t - 1]
    return out


def rsi(close: np.ndarray, w: int) -> np.ndarray:
    """Relative Strength Index with Wilder smoothing of average gains/losses.

    Conventions: avg loss 0 -> 100, avg gain 0 -> 0, both 0 -> 50 (neutral).
    """
    close = np.asarray(close, dtype=np.float64)
    _check_window(len(close), w, w + 1)
    deltas = np.diff(close)
    gains = np.maximum(deltas, 0.0)
    losses = np.maximum(-deltas, 0.0)

    out = np.full(len(close), np.nan)
    avg_gain = gains[:w].mean()
    avg_loss = losses[:w].mean()
    out[w] = _rsi_value(avg_gain, avg_loss)
    for t in range(w + 1, len(close)):
        avg_gain = (avg_gain * (w - 1) + gains[t - 1]) / w
        avg_loss = (avg_loss * (w - 1) + losses[t - 1]) / w
        out[t] = _rsi_value(avg_gain, avg_loss)
    return out


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0 and avg_gain == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    if avg_gain == 0.0:
        return 0.0
    rs = avg_gain / avg_loss
    return 100.0 - 100.0 / (1.0 + rs)


def _rolling_extrema(high: np.ndarray, low: np.ndarray, w: int) -> tuple[np.ndarray, np.ndarray]:
    hh = np.lib.stride_tricks.sliding_window_view(high, w).max(axis=-1)
    ll = np.lib.stride_tricks.sliding_window_view(low, w).min(axis=-1)
    return hh, ll


def stochastic_k(high: np.ndarray, low: np.ndarray, close: np.ndarray, w: int) -> np.ndarray:
    """%K: close position within the highest-high/lowest-low window range. Flat window -> 50."""
    high = np.asarray(high, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    close = np.asarray(close, dtype=np.float64)
    _check_window(len(close), w, w)
    hh, ll = _rolling_extrema(high, low, w)
    out = np.full(len(close), np.nan)
    span = hh - ll
    tail = close[w - 1 :]
    with np.errstate(invalid="ignore", divide="ignore"):
        values = 100.0 * (tail - ll) / span
    values[span == 0.0] = 50.0
    out[w - 1 :] = values
    return out


def macd(close: np.ndarray) -> np.ndarray:
    """MACD line: EMA(12) - EMA(26). No signal line."""
    close = np.asarray(close, dtype=np.float64)
    if len(close) < MACD_SLOW:
        raise ValueError(f"series of length {len(close)} is too short for MACD({MACD_FAST},{MACD_SLOW})")
    return ema(close, MACD_FAST) - ema(close, MACD_SLOW)


def ad_oscillator(high: np.ndarray, low: np.ndarray, close: np.ndarray, volume: np.ndarray) -> np.ndarray:
    """Accumulation/Distribution line: cumulative money-flow-multiplier times volume."""
    high = np.asarray(high, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    close = np.asarray(close, dtype=np.float64)
    volume = np.asarray(volume, dtype=np.float64)
    span = high - low
    multiplier = np.zeros(len(close))
    nonzero = span != 0.0
    multiplier[nonzero] = ((close - low) - (high - close))[nonzero] / span[nonzero]
    return np.cumsum(multiplier * volume)


def obv(close: np.ndarray, volume: np.ndarray) -> np.ndarray:
    """On-Balance Volume: signed cumulative volume, starting at 0."""
    close = np.asarray(close, dtype=np.float64)
    volume = np.asarray(volume, dtype=np.float64)
    signed = np.zeros(len(close))
    signed[1:] = np.sign(np.diff(close)) * volume[1:]
    return np.cumsum(signed)


def roc(close: np.ndarray, w: int) -> np.ndarray:
    """Rate of change: percentage move versus w bars ago."""
    close = np.asarray(close, dtype=np.float64)
    _check_window(len(close), w, w + 1)
    out = np.full(len(close), np.nan)
    out[w:] = 100.0 * (close[w:] - close[:-w]) / close[:-w]
    return out


def williams_r(high: np.ndarray, low: np.ndarray, close: np.ndarray, w: int) -> np.ndarray:
    """%R: close distance from the window high, in [-100, 0]. Flat window -> -50."""
    high = np.asarray(high, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    close = np.asarray(close, dtype=np.float64)
    _check_window(len(close), w, w)
    hh, ll = _rolling_extrema(high, low, w)
    out = np.full(len(close), np.nan)
    span = hh - ll
    tail = close[w - 1 :]
    with np.errstate(invalid="ignore", divide="ignore"):
        values = -100.0 * (hh - tail) / span
    values[span == 0.0] = -50.0
    out[w - 1 :] = values
    return out


def disparity(close: np.ndarray, w: int) -> np.ndarray:
    """Disparity index: close as a percentage of its w-period EMA."""
    close = np.asarray(close, dtype=np.float64)
    return 100.0 * close / ema(close, w)


@dataclass(frozen=True)
class IndicatorBlock:
    """The ten indicator series for one asset, NaN before the unified warm-up."""

    symbol: str
    rsi: np.ndarray
    sma: np.ndarray
    ema: np.ndarray
    stoch_k: np.ndarray
    macd: np.ndarray
    ad: np.ndarray
    obv: np.ndarray
    roc: np.ndarray
    williams_r: np.ndarray
    disparity: np.ndarray

    def matrix(self) -> np.ndarray:
        """(T, 10) array in the fixed INDICATOR_NAMES slot order."""
        return np.column_stack([getattr(self, name) for name in INDICATOR_NAMES])


def compute_block(panel: AlignedPanel, w: int, price_field: str = "adj_close") -> list[IndicatorBlock]:
    """Compute all ten indicators per asset over the panel.

    The leading max(26, w+1) rows are masked NaN in every series so that the
    full indicator vector is defined from the same index for every asset.
    """
    warmup = warmup_length(w)
    if panel.n_dates <= warmup:
        raise ValueError(
            f"panel of length {panel.n_dates} is shorter than the warm-up {warmup} for window {w}"
        )
    closes = panel.prices(price_field)
    highs = panel.field("high")
    lows = panel.field("low")
    volumes = panel.field("volume")

    blocks: list[IndicatorBlock] = []
    for i, symbol in enumerate(panel.symbols):
        c, h, l, v = closes[i], highs[i], lows[i], volumes[i]
        series = {
            "rsi": rsi(c, w),
            "sma": sma(c, w),
            "ema": ema(c, w),
            "stoch_k": stochastic_k(h, l, c, w),
            "macd": macd(c),
            "ad": ad_oscillator(h, l, c, v),
            "obv": obv(c, v),
            "roc": roc(c, w),
            "williams_r": williams_r(h, l, c, w),
            "disparity": disparity(c, w),
        }
        for values in series.values():
            values[:warmup] = np.nan
        blocks.append(IndicatorBlock(symbol=symbol, **series))
    return blocks
