"""deeptrader: a seedable trading backtester driven by a TD3 actor-critic agent."""

__version__ = "0.1.0"
