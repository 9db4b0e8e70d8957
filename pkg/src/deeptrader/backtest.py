"""Episode orchestration, performance metrics and multi-seed aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .indicators import IndicatorBlock
from .market_data import AlignedPanel
from .sentiment import SentimentSeries
from .td3_agent import TD3Agent, TD3Config, Transition
from .trading_env import EnvConfig, TradingEnv, portfolio_value

TRADING_DAYS_PER_YEAR = 252

METRICS = ("accumulated_return", "sharpe", "commission")


@dataclass
class EpisodeStats:
    """Outcome of one pass over an environment.

    ``values`` has one entry per visited date (episode length + 1); rewards
    telescope so final_value - initial_capital equals total_reward.
    """

    total_reward: float
    final_value: float
    initial_capital: float
    sharpe: Optional[float]
    commission_total: float
    values: list[float]
    final_holdings: dict[str, int]
    records: list[dict]


@dataclass
class SeedAggregate:
    """Per-metric mean and standard error across independent seeded runs."""

    seeds: list[int]
    per_run: dict[str, list[Optional[float]]]
    mean: dict[str, Optional[float]]
    stderr: dict[str, Optional[float]]


def sharpe_ratio(values, periods_per_year: int = TRADING_DAYS_PER_YEAR) -> Optional[float]:
    """Annualized zero-rate Sharpe ratio of a daily portfolio-value series.

    Returns None (flagged undefined) when the return deviation is zero.
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 3:
        raise ValueError(f"need at least 3 values for a Sharpe ratio, got {len(values)}")
    returns = values[1:] / values[:-1] - 1.0
    sd = returns.std(ddof=1)
    if sd == 0.0:
        return None
    return float(returns.mean() / sd * math.sqrt(periods_per_year))


def run_episode(
    env: TradingEnv,
    agent: TD3Agent,
    learn: bool,
    explore: Optional[bool] = None,
) -> EpisodeStats:
    """Drive one full episode; when ``learn`` each step also trains the agent.

    ``explore`` defaults to ``learn``: training uses the behaviour policy
    (uniform during warm-up, then noisy), evaluation the deterministic one.
    """
    if explore is None:
        explore = learn
    obs = env.reset()
    values = [portfolio_value(env.portfolio, env.prices[:, env.cursor])]
    records: list[dict] = []
    total_reward = 0.0
    commission = 0.0

    while not env.done:
        if explore:
            action = agent.behaviour_action(obs)
        else:
            action = agent.select_action(obs, explore=False)
        result = env.step(action)
        if learn:
            agent.train_step(
                Transition(
                    state=obs,
                    action=action,
                    reward=result.reward,
                    next_state=result.observation,
                    done=result.done,
                )
            )
        obs = result.observation
        total_reward += result.reward
        commission += result.info["commission"]
        values.append(result.info["value"])
        records.append({**result.info, "reward": result.reward})

    holdings = env.portfolio.holdings
    return EpisodeStats(
        total_reward=total_reward,
        final_value=values[-1],
        initial_capital=env.config.initial_capital,
        sharpe=sharpe_ratio(values),
        commission_total=commission,
        values=values,
        final_holdings={s: int(h) for s, h in zip(env.symbols, holdings)},
        records=records,
    )


def evaluate(env: TradingEnv, agent: TD3Agent, learn_on_test: bool = False) -> EpisodeStats:
    """One pass over a test environment: no exploration noise, statistics
    frozen unless the agent is allowed to keep learning on the test set."""
    return run_episode(env, agent, learn=learn_on_test, explore=False)


def ablation_no_sell(
    panel: AlignedPanel,
    config: EnvConfig,
    agent: TD3Agent,
    sentiment: Optional[SentimentSeries] = None,
    blocks: Optional[list[IndicatorBlock]] = None,
    learn_on_test: bool = False,
) -> EpisodeStats:
    """Evaluation variant with the sell action disabled (buy-and-hold probe)."""
    env = TradingEnv(panel, replace(config, disable_sell=True), sentiment=sentiment, blocks=blocks)
    return evaluate(env, agent, learn_on_test=learn_on_test)


def make_agent(env: TradingEnv, config: TD3Config, seed: int) -> TD3Agent:
    """Agent wired to an environment: seeded, rewards scaled by initial capital."""
    cfg = replace(config, seed=seed, reward_scale=1.0 / env.config.initial_capital)
    return TD3Agent(env.observation_size, env.action_size, cfg)


def train_agent(env: TradingEnv, agent: TD3Agent, episodes: int) -> list[EpisodeStats]:
    """Train for a number of episodes on one environment; returns per-episode stats."""
    return [run_episode(env, agent, learn=True) for _ in range(episodes)]


def _metric_values(stats: EpisodeStats) -> dict[str, Optional[float]]:
    return {
        "accumulated_return": stats.total_reward,
        "sharpe": stats.sharpe,
        "commission": stats.commission_total,
    }


def aggregate_runs(seeds: list[int], finals: list[EpisodeStats]) -> SeedAggregate:
    """Mean and standard error (sample stddev / sqrt(n)) of the end-of-training
    metrics across seeds; undefined per-run values are skipped."""
    per_run = {m: [_metric_values(s)[m] for s in finals] for m in METRICS}
    mean: dict[str, Optional[float]] = {}
    stderr: dict[str, Optional[float]] = {}
    for metric, vals in per_run.items():
        defined = [v for v in vals if v is not None]
        if not defined:
            mean[metric] = None
            stderr[metric] = None
            continue
        mean[metric] = float(np.mean(defined))
        if len(defined) >= 2:
            stderr[metric] = float(np.std(defined, ddof=1) / math.sqrt(len(defined)))
        else:
            stderr[metric] = None
    return SeedAggregate(seeds=seeds, per_run=per_run, mean=mean, stderr=stderr)


def train_multi_seed(
    env_factory: Callable[[], TradingEnv],
    agent_config: TD3Config,
    episodes: int,
    seeds: list[int],
) -> tuple[list[list[EpisodeStats]], list[TD3Agent], SeedAggregate]:
    """Run the full training once per seed (independent env + agent) and
    aggregate the final-episode metrics. Returns (per-seed episode curves,
    trained agents, aggregate)."""
    curves: list[list[EpisodeStats]] = []
    agents: list[TD3Agent] = []
    for seed in seeds:
        env = env_factory()
        agent = make_agent(env, agent_config, seed)
        curves.append(train_agent(env, agent, episodes))
        agents.append(agent)
    aggregate = aggregate_runs(seeds, [c[-1] for c in curves])
    return curves, agents, aggregate


def aggregate_to_dict(aggregate: SeedAggregate) -> dict:
    return {
        "seeds": aggregate.seeds,
        "metrics": {
            m: {
                "mean": aggregate.mean[m],
                "stderr": aggregate.stderr[m],
                "per_run": aggregate.per_run[m],
            }
            for m in METRICS
        },
    }


def stats_to_dict(stats: EpisodeStats) -> dict:
    return {
        "total_reward": stats.total_reward,
        "final_value": stats.final_value,
        "initial_capital": stats.initial_capital,
        "sharpe": stats.sharpe,
        "commission_total": stats.commission_total,
        "steps": len(stats.values) - 1,
        "final_holdings": stats.final_holdings,
    }
