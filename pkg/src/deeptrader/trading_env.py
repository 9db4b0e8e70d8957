"""The daily trading environment: observations, order execution, rewards.

One instance owns a mutable cursor and portfolio and is single-threaded;
run independent instances for parallel experiments. Rewards are raw currency
changes in portfolio value; any reward scaling for learning is the agent's
concern.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .indicators import IndicatorBlock, compute_block, warmup_length
from .market_data import AlignedPanel
from .sentiment import SentimentSeries

PRESETS = ("baseline", "tech", "full")

# Observation slots per asset, keyed by preset: close / close+indicators /
# close+sentiment+indicators. The leading 1+N slots are cash and holdings.
_SLOTS_PER_ASSET = {"baseline": 1, "tech": 11, "full": 12}


def observation_size(preset: str, n_assets: int) -> int:
    if preset not in PRESETS:
        raise ValueError(f"preset must be one of {PRESETS}, got {preset!r}")
    return 1 + n_assets * (1 + _SLOTS_PER_ASSET[preset])


@dataclass(frozen=True)
class Portfolio:
    """Cash plus integer share holdings; both are invariantly non-negative."""

    cash: float
    holdings: np.ndarray  # (N,) int64

    def __post_init__(self) -> None:
        if self.cash < 0:
            raise ValueError(f"negative cash balance {self.cash}")
        if (self.holdings < 0).any():
            raise ValueError("negative holdings (short selling is prohibited)")


@dataclass(frozen=True)
class EnvConfig:
    initial_capital: float
    k_max: int
    d_buy: float = 0.0
    d_sell: float = 0.0
    lookback: int = 20
    preset: str = "full"
    price_field: str = "adj_close"
    disable_sell: bool = False

    def __post_init__(self) -> None:
        if self.initial_capital <= 0:
            raise ValueError("initial_capital must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        for name in ("d_buy", "d_sell"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        if self.preset not in PRESETS:
            raise ValueError(f"preset must be one of {PRESETS}, got {self.preset!r}")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def portfolio_value(portfolio: Portfolio, prices: np.ndarray) -> float:
    """Cash plus holdings marked at the given prices."""
    return float(portfolio.cash + portfolio.holdings @ np.asarray(prices, dtype=np.float64))


def scale_action(raw: np.ndarray, k_max: int) -> np.ndarray:
    """Map [-1, 1] components to integer share counts in [-k_max, k_max].

    Values outside [-1, 1] (exploration noise) are clamped first; rounding is
    half away from zero so buys and sells are treated symmetrically.
    """
    scaled = np.clip(np.asarray(raw, dtype=np.float64), -1.0, 1.0) * k_max
    return (np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)).astype(np.int64)


def execute(
    orders: np.ndarray,
    portfolio: Portfolio,
    prices: np.ndarray,
    d_buy: float,
    d_sell: float,
) -> tuple[Portfolio, float, np.ndarray]:
    """Fill integer share orders under the liquidity constraints.

    Sells settle first (clamped at current holdings) so their proceeds can
    fund buys; buys then fill in ascending asset index, each truncated to
    what the cash balance affords at price*(1+d_buy). Returns the new
    portfolio, total commission paid, and the executed share vector.
    """
    orders = np.asarray(orders, dtype=np.int64)
    prices = np.asarray(prices, dtype=np.float64)
    cash = portfolio.cash
    holdings = portfolio.holdings.copy()
    executed = np.zeros_like(orders)
    commission = 0.0

    for i in np.flatnonzero(orders < 0):
        qty = min(-int(orders[i]), int(holdings[i]))
        if qty == 0:
            continue
        proceeds = qty * prices[i]
        cash += proceeds * (1.0 - d_sell)
        commission += proceeds * d_sell
        holdings[i] -= qty
        executed[i] = -qty

    for i in np.flatnonzero(orders > 0):
        unit_cost = prices[i] * (1.0 + d_buy)
        qty = min(int(orders[i]), int(cash // unit_cost))
        while qty > 0 and qty * unit_cost > cash:
            qty -= 1  # float floor-division can overshoot by one ulp
        if qty == 0:
            continue
        cash -= qty * unit_cost
        commission += qty * prices[i] * d_buy
        holdings[i] += qty
        executed[i] = qty

    return Portfolio(cash=cash, holdings=holdings), commission, executed


class TradingEnv:
    """POMDP trading environment over an aligned panel.

    The episode starts at the indicator warm-up index and advances one
    session per step; it ends when the cursor reaches the last panel date.
    """

    def __init__(
        self,
        panel: AlignedPanel,
        config: EnvConfig,
        sentiment: Optional[SentimentSeries] = None,
        blocks: Optional[list[IndicatorBlock]] = None,
    ):
        self.panel = panel
        self.config = config
        self.symbols = panel.symbols
        self.n_assets = panel.n_assets
        self.warmup = warmup_length(config.lookback)
        if panel.n_dates <= self.warmup + 1:
            raise ValueError(
                f"panel of length {panel.n_dates} is too short: need more than "
                f"{self.warmup + 1} rows for warm-up {self.warmup} plus one step"
            )
        self.prices = panel.prices(config.price_field)  # (N, T)

        if config.preset in ("tech", "full"):
            if blocks is None:
                blocks = compute_block(panel, config.lookback, config.price_field)
            if len(blocks) != self.n_assets:
                raise ValueError("indicator blocks do not match panel assets")
            # (N, T, 10), finite past warm-up by construction
            self._indicators = np.stack([b.matrix() for b in blocks])
        else:
            self._indicators = None

        if config.preset == "full":
            if sentiment is None:
                raise ValueError("preset 'full' requires a sentiment series")
            if sentiment.dates != panel.dates or sentiment.symbols != panel.symbols:
                raise ValueError("sentiment series is not aligned with the panel")
            self._sentiment = sentiment.scores.astype(np.float64)
        else:
            self._sentiment = None

        self.observation_size = observation_size(config.preset, self.n_assets)
        self.action_size = self.n_assets
        self._portfolio: Optional[Portfolio] = None
        self._cursor = 0
        self._done = True

    @property
    def portfolio(self) -> Portfolio:
        if self._portfolio is None:
            raise RuntimeError("environment has not been reset")
        return self._portfolio

    @property
    def cursor(self) -> int:
        return self._cursor

    @property
    def done(self) -> bool:
        return self._done

    @property
    def episode_length(self) -> int:
        """Steps per episode: panel length minus warm-up minus one."""
        return self.panel.n_dates - self.warmup - 1

    def reset(self) -> np.ndarray:
        self._portfolio = Portfolio(
            cash=self.config.initial_capital,
            holdings=np.zeros(self.n_assets, dtype=np.int64),
        )
        self._cursor = self.warmup
        self._done = False
        return self.observe()

    def observe(self) -> np.ndarray:
        """Assemble [cash, holdings, per-asset market signals] at the cursor."""
        p = self.portfolio
        t = self._cursor
        slots = [np.array([p.cash]), p.holdings.astype(np.float64)]
        for i in range(self.n_assets):
            slots.append(self.prices[i, t : t + 1])
            if self.config.preset == "full":
                slots.append(self._sentiment[i, t : t + 1])
            if self.config.preset in ("tech", "full"):
                slots.append(self._indicators[i, t])
        return np.concatenate(slots)

    def step(self, raw_action: np.ndarray) -> StepResult:
        if self._done:
            raise RuntimeError("cannot step a finished episode; call reset()")
        raw_action = np.asarray(raw_action, dtype=np.float64)
        if raw_action.shape != (self.n_assets,):
            raise ValueError(f"action must have shape ({self.n_assets},), got {raw_action.shape}")

        t = self._cursor
        prices_now = self.prices[:, t]
        orders = scale_action(raw_action, self.config.k_max)
        if self.config.disable_sell:
            orders = np.maximum(orders, 0)

        value_before = portfolio_value(self.portfolio, prices_now)
        self._portfolio, commission, executed = execute(
            orders, self.portfolio, prices_now, self.config.d_buy, self.config.d_sell
        )

        self._cursor = t + 1
        self._done = self._cursor >= self.panel.n_dates - 1
        value_after = portfolio_value(self._portfolio, self.prices[:, self._cursor])
        reward = value_after - value_before

        info = {
            "date": self.panel.dates[t],
            "value": value_after,
            "cash": self._portfolio.cash,
            "holdings": self._portfolio.holdings.copy(),
            "executed": executed,
            "commission": commission,
        }
        return StepResult(observation=self.observe(), reward=reward, done=self._done, info=info)


def trace_header(symbols: tuple[str, ...]) -> list[str]:
    return (
        ["date", "V_t", "reward", "cash", "commission"]
        + [f"h_{s}" for s in symbols]
        + [f"x_{s}" for s in symbols]
    )


def write_trace(path: str | Path, symbols: tuple[str, ...], records: list[dict]) -> None:
    """Per-step audit CSV: date, value, reward, cash, commission, holdings, executed."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(trace_header(symbols))
        for rec in records:
            writer.writerow(
                [
                    rec["date"].isoformat(),
                    repr(rec["value"]),
                    repr(rec["reward"]),
                    repr(rec["cash"]),
                    repr(rec["commission"]),
                ]
                + [int(h) for h in rec["holdings"]]
                + [int(x) for x in rec["executed"]]
            )
