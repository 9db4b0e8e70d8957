"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion lines.
"""

import json
import time
from datetime import date
from pathlib import Path

import numpy as np
import pytest

from deeptrader.backtest import aggregate_runs, evaluate, make_agent, run_episode, train_multi_seed
from deeptrader.cli import DEFAULT_EPISODES, DEFAULT_SEEDS, main
from deeptrader.indicators import (
    INDICATOR_NAMES,
    ad_oscillator,
    disparity,
    ema,
    macd,
    obv,
    roc,
    rsi,
    sma,
    stochastic_k,
    williams_r,
)
from deeptrader.market_data import align_calendar
from deeptrader.neural import init_mlp, polyak_update
from deeptrader.sentiment import SentimentSeries
from deeptrader.synthetic import sawtooth_closes, sawtooth_series, weekday_sessions
from deeptrader.td3_agent import TD3Agent, TD3Config
from deeptrader.trading_env import EnvConfig, TradingEnv, portfolio_value

import oracles
from conftest import make_panel, random_ohlcv
from test_cli import write_config


def _announce(name: str) -> None:
    print(f"\n[ACCEPTANCE PASS] {name}")


# ---------------------------------------------------------------------------
# Criterion: environment safety fuzz
# ---------------------------------------------------------------------------


def test_environment_safety_fuzz():
    """1e5 random actions across random configs never violate cash/holdings
    non-negativity and never abort; runtime < 60 s."""
    rng = np.random.default_rng(2024)
    total_steps = 0
    start = time.time()
    trial = 0
    while total_steps < 100_000:
        trial += 1
        n = int(rng.integers(1, 5))
        panel = make_panel(n_assets=n, n_dates=int(rng.integers(40, 200)), seed=trial)
        config = EnvConfig(
            initial_capital=float(rng.uniform(50, 50_000)),
            k_max=int(rng.integers(1, 200)),
            d_buy=float(rng.uniform(0, 0.1)),
            d_sell=float(rng.uniform(0, 0.1)),
            preset="baseline",
            disable_sell=bool(rng.uniform() < 0.1),
        )
        env = TradingEnv(panel, config)
        env.reset()
        while not env.done and total_steps < 100_000:
            env.step(rng.uniform(-1.5, 1.5, size=n))
            assert env.portfolio.cash >= 0.0
            assert (env.portfolio.holdings >= 0).all()
            total_steps += 1
    elapsed = time.time() - start
    assert elapsed < 60.0, f"fuzz took {elapsed:.1f}s"
    _announce(f"environment safety fuzz: {total_steps} steps, {elapsed:.1f}s, no violations")


# ---------------------------------------------------------------------------
# Criterion: accounting identity
# ---------------------------------------------------------------------------


def test_accounting_identity():
    """V_after - V_before = holdings . dPrice - commission to 1e-9 relative
    on 1e4 randomized steps."""
    rng = np.random.default_rng(7)
    checked = 0
    trial = 0
    while checked < 10_000:
        trial += 1
        n = int(rng.integers(1, 4))
        panel = make_panel(n_assets=n, n_dates=int(rng.integers(40, 150)), seed=1000 + trial)
        config = EnvConfig(
            initial_capital=float(rng.uniform(100, 20_000)),
            k_max=int(rng.integers(1, 100)),
            d_buy=float(rng.uniform(0, 0.05)),
            d_sell=float(rng.uniform(0, 0.05)),
            preset="baseline",
        )
        env = TradingEnv(panel, config)
        env.reset()
        while not env.done and checked < 10_000:
            before = portfolio_value(env.portfolio, env.prices[:, env.cursor])
            result = env.step(rng.uniform(-1, 1, size=n))
            t = env.cursor
            delta = env.prices[:, t] - env.prices[:, t - 1]
            expected = float(result.info["holdings"] @ delta) - result.info["commission"]
            lhs = result.info["value"] - before
            tolerance = 1e-9 * max(1.0, abs(result.info["value"]))
            assert abs(lhs - expected) <= tolerance
            checked += 1
    _announce(f"accounting identity: {checked} randomized steps within 1e-9 relative")


# ---------------------------------------------------------------------------
# Criterion: indicator oracle equivalence
# ---------------------------------------------------------------------------


def _indicator_impls(w):
    return {
        "rsi": lambda h, l, c, v: rsi(c, w),
        "sma": lambda h, l, c, v: sma(c, w),
        "ema": lambda h, l, c, v: ema(c, w),
        "stoch_k": lambda h, l, c, v: stochastic_k(h, l, c, w),
        "macd": lambda h, l, c, v: macd(c),
        "ad": lambda h, l, c, v: ad_oscillator(h, l, c, v),
        "obv": lambda h, l, c, v: obv(c, v),
        "roc": lambda h, l, c, v: roc(c, w),
        "williams_r": lambda h, l, c, v: williams_r(h, l, c, w),
        "disparity": lambda h, l, c, v: disparity(c, w),
    }


def test_indicator_oracle_equivalence():
    """All ten indicators match brute-force references on 1000 random series
    (length 100, W in {9, 14, 20}) to 1e-9 relative; %K = 100 + %R pointwise."""
    windows = (9, 14, 20)
    for index in range(1000):
        rng = np.random.default_rng(50_000 + index)
        high, low, close, volume = random_ohlcv(rng, 100)
        w = windows[index % 3]
        impls = _indicator_impls(w)
        ref_args = (list(high), list(low), list(close), list(volume))
        for name in INDICATOR_NAMES:
            got = impls[name](high, low, close, volume)
            want = np.asarray(oracles.ALL_REFS[name](*ref_args, w), dtype=np.float64)
            mask = ~np.isnan(want)
            assert (mask == ~np.isnan(got)).all(), f"{name} warm-up mask differs"
            np.testing.assert_allclose(
                got[mask], want[mask], rtol=1e-9, atol=1e-12, err_msg=f"{name} w={w} series={index}"
            )
        k = stochastic_k(high, low, close, w)
        r = williams_r(high, low, close, w)
        valid = ~np.isnan(k)
        np.testing.assert_allclose(k[valid], 100.0 + r[valid], rtol=1e-9, atol=1e-9)
    _announce("indicator oracle equivalence: 1000 series x 10 indicators, W in {9,14,20}, rtol 1e-9")


# ---------------------------------------------------------------------------
# Criterion: gradient correctness
# ---------------------------------------------------------------------------


def test_gradient_correctness():
    """Analytic actor/critic loss gradients match central finite differences
    (eps=1e-5) with relative error < 1e-4 over 100 random draws."""
    obs_dim, act_dim, batch = 4, 2, 3
    for draw in range(100):
        rng = np.random.default_rng(90_000 + draw)
        actor = init_mlp((obs_dim, 8, 8, act_dim), output_activation="tanh", rng=rng)
        critic = init_mlp((obs_dim + act_dim, 8, 8, 1), output_activation="linear", rng=rng)
        states = rng.normal(size=(batch, obs_dim))
        actions = rng.uniform(-1, 1, size=(batch, act_dim))
        targets = rng.normal(size=batch)

        # Critic MSE loss toward frozen targets.
        def critic_loss():
            q = critic.forward(np.hstack([states, actions]))[:, 0]
            return float(np.mean((targets - q) ** 2))

        q, cache = critic.forward_cached(np.hstack([states, actions]))
        grads, _ = critic.backward(cache, (2.0 * (q[:, 0] - targets) / batch)[:, None])
        expected = oracles.finite_difference(critic_loss, critic.parameters(), eps=1e-5)
        for got, want in zip(grads, expected):
            np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-8)

        # Actor loss -mean Q(s, pi(s)) through the frozen critic.
        def actor_loss():
            a = actor.forward(states)
            return float(-np.mean(critic.forward(np.hstack([states, a]))))

        a, actor_cache = actor.forward_cached(states)
        _, critic_cache = critic.forward_cached(np.hstack([states, a]))
        _, input_grad = critic.backward(critic_cache, np.full((batch, 1), -1.0 / batch))
        actor_grads, _ = actor.backward(actor_cache, input_grad[:, obs_dim:])
        expected = oracles.finite_difference(actor_loss, actor.parameters(), eps=1e-5)
        for got, want in zip(actor_grads, expected):
            np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-8)
    _announce("gradient correctness: 100 draws, actor+critic losses vs central differences")


# ---------------------------------------------------------------------------
# Criterion: TD3 mechanics
# ---------------------------------------------------------------------------


def test_td3_mechanics():
    """Clipped double target dominance, exact actor/target update cadence,
    Polyak closed form."""
    # Dominance on every sampled batch.
    for seed in range(5):
        agent = TD3Agent(
            5, 2, TD3Config(hidden=(8, 8), batch_size=16, warmup_steps=1, seed=seed,
                            normalize_observations=False)
        )
        rng = np.random.default_rng(seed)
        rewards = rng.normal(size=16)
        next_states = rng.normal(size=(16, 5))
        dones = (rng.uniform(size=16) < 0.3).astype(float)
        state = agent.rng.bit_generator.state
        y = agent.critic_target(rewards, next_states, dones)
        agent.rng.bit_generator.state = state
        smoothed = agent.smoothed_target_action(next_states)
        q_in = np.hstack([next_states, smoothed])
        for critic in (agent.critic1_target, agent.critic2_target):
            single = rewards + agent.config.gamma * (1 - dones) * critic.forward(q_in)[:, 0]
            assert (y <= single + 1e-12).all()

    # Exact delayed cadence for several d values.
    for d in (1, 2, 3):
        agent = TD3Agent(
            5, 2, TD3Config(hidden=(8, 8), batch_size=4, warmup_steps=1, policy_delay=d,
                            seed=d, normalize_observations=False)
        )
        rng = np.random.default_rng(100 + d)
        updated = []
        for step in range(1, 7):
            batch = {
                "states": rng.normal(size=(4, 5)),
                "actions": rng.uniform(-1, 1, size=(4, 2)),
                "rewards": rng.normal(size=4),
                "next_states": rng.normal(size=(4, 5)),
                "dones": np.zeros(4),
            }
            before = [p.copy() for p in agent.actor_target.parameters()]
            agent.update_actor_and_targets(batch, step)
            changed = any(
                not np.array_equal(p, b)
                for p, b in zip(agent.actor_target.parameters(), before)
            )
            if changed:
                updated.append(step)
        assert updated == [s for s in range(1, 7) if s % d == 0]

    # Polyak closed form.
    rng = np.random.default_rng(11)
    source = init_mlp((3, 4, 2), output_activation="tanh", rng=rng)
    target = init_mlp((3, 4, 2), output_activation="tanh", rng=rng)
    tau = 0.005
    expected = [tau * s + (1 - tau) * t for s, t in zip(source.parameters(), target.parameters())]
    polyak_update(target, source, tau)
    for got, want in zip(target.parameters(), expected):
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-15)
    _announce("TD3 mechanics: min-target dominance, delayed cadence, Polyak closed form")


# ---------------------------------------------------------------------------
# Criterion: learning smoke test
# ---------------------------------------------------------------------------

SAW_PERIOD = 10
SAW_AMPLITUDE = 0.2
SAW_BASE = 100.0
SAW_T = 227  # warm-up 26 + 200 steps + terminal row
SAW_CAPITAL = 2000.0
SAW_KMAX = 10


def _sawtooth_env() -> TradingEnv:
    sessions = weekday_sessions(date(2019, 1, 7), SAW_T)
    series = sawtooth_series("SAW", sessions, period=SAW_PERIOD, amplitude=SAW_AMPLITUDE, base=SAW_BASE)
    panel = align_calendar([series], sessions)
    config = EnvConfig(
        initial_capital=SAW_CAPITAL, k_max=SAW_KMAX, d_buy=0.0, d_sell=0.0,
        preset="tech", lookback=9,
    )
    return TradingEnv(panel, config)


def _sawtooth_oracle_profit() -> float:
    """Buy K_max at each trough, sell at each peak, mark to market at the end."""
    closes = sawtooth_closes(SAW_T, period=SAW_PERIOD, amplitude=SAW_AMPLITUDE, base=SAW_BASE)
    cash, shares = SAW_CAPITAL, 0
    for t in range(26, SAW_T - 1):
        price = float(closes[t])
        if t % SAW_PERIOD == 0:
            buy = min(SAW_KMAX, int(cash // price))
            cash -= buy * price
            shares += buy
        elif t % SAW_PERIOD == SAW_PERIOD // 2:
            sell = min(SAW_KMAX, shares)
            cash += sell * price
            shares -= sell
    return cash + shares * float(closes[SAW_T - 1]) - SAW_CAPITAL


SMOKE_TD3 = TD3Config(
    gamma=0.9,
    tau=0.01,
    policy_delay=2,
    explore_sigma=0.2,
    smooth_sigma=0.1,
    noise_clip=0.25,
    batch_size=64,
    buffer_capacity=20_000,
    warmup_steps=500,
    actor_lr=1e-3,
    critic_lr=1e-3,
    hidden=(64, 64),
)


def test_learning_smoke():
    """On the deterministic sawtooth market (period 10, amplitude 20%, zero
    commission, K_max=10) the agent reaches >= 70% of the trough/peak oracle
    profit within 200 episodes averaged over 3 seeds, beats uniform random by
    >= 3x, in under 10 minutes."""
    start = time.time()
    oracle = _sawtooth_oracle_profit()
    assert oracle > 0

    random_profits = []
    for seed in range(5):
        env = _sawtooth_env()
        rng = np.random.default_rng(seed)
        env.reset()
        total = 0.0
        while not env.done:
            total += env.step(rng.uniform(-1, 1, size=1)).reward
        random_profits.append(total)
    random_mean = float(np.mean(random_profits))

    target = 0.7 * oracle
    achieved = []
    episodes_used = []
    for seed in (1, 2, 3):
        env = _sawtooth_env()
        agent = make_agent(env, SMOKE_TD3, seed)
        best = -np.inf
        for episode in range(1, 201):
            run_episode(env, agent, learn=True)
            stats = evaluate(_sawtooth_env(), agent)
            best = max(best, stats.total_reward)
            if best >= target:
                break
        achieved.append(best)
        episodes_used.append(episode)

    mean_achieved = float(np.mean(achieved))
    elapsed = time.time() - start
    assert mean_achieved >= target, f"mean profit {mean_achieved:.0f} < target {target:.0f}"
    assert mean_achieved >= 3.0 * max(random_mean, 0.0), (
        f"agent {mean_achieved:.0f} does not beat random {random_mean:.0f} by 3x"
    )
    assert elapsed < 600.0, f"smoke test took {elapsed:.0f}s"
    _announce(
        "learning smoke: oracle={:.0f}, agent mean={:.0f} ({:.0%}), random mean={:.0f}, "
        "episodes={}, {:.0f}s".format(
            oracle, mean_achieved, mean_achieved / oracle, random_mean, episodes_used, elapsed
        )
    )


# ---------------------------------------------------------------------------
# Criterion: protocol fidelity
# ---------------------------------------------------------------------------


def test_protocol_fidelity():
    """Three presets run the 5-seed protocol and report mean +/- stderr of
    return/Sharpe/commission in the comparison-table layout; the tech-vs-
    baseline ordering on the fixture is reported, not hard-failed."""
    assert DEFAULT_EPISODES == 200
    assert DEFAULT_SEEDS == [0, 1, 2, 3, 4]

    sessions = weekday_sessions(date(2019, 1, 7), 107)  # 80 steps per episode
    series = sawtooth_series("SAW", sessions, period=SAW_PERIOD, amplitude=SAW_AMPLITUDE, base=SAW_BASE)
    panel = align_calendar([series], sessions)
    zero_sentiment = SentimentSeries(
        symbols=panel.symbols, dates=panel.dates, scores=np.zeros((1, panel.n_dates), dtype=np.int64)
    )
    seeds = [0, 1, 2, 3, 4]
    episodes = 8
    config = TD3Config(**{**SMOKE_TD3.__dict__, "warmup_steps": 200, "buffer_capacity": 10_000})

    results = {}
    widths = {}
    for preset in ("baseline", "tech", "full"):
        env_config = EnvConfig(
            initial_capital=SAW_CAPITAL, k_max=SAW_KMAX, preset=preset, lookback=9
        )

        def factory(env_config=env_config, preset=preset):
            sentiment = zero_sentiment if preset == "full" else None
            return TradingEnv(panel, env_config, sentiment=sentiment)

        widths[preset] = factory().observation_size
        _, _, aggregate = train_multi_seed(factory, config, episodes=episodes, seeds=seeds)
        results[preset] = aggregate

    n = 1
    assert widths == {"baseline": 1 + 2 * n, "tech": 1 + 12 * n, "full": 1 + 13 * n}
    for preset, aggregate in results.items():
        assert aggregate.seeds == seeds
        for metric in ("accumulated_return", "sharpe", "commission"):
            assert len(aggregate.per_run[metric]) == 5
            assert metric in aggregate.mean and metric in aggregate.stderr
        assert aggregate.stderr["accumulated_return"] is not None  # 5 runs -> stderr defined

    base = results["baseline"]
    tech = results["tech"]
    pooled = float(
        np.sqrt(
            (base.stderr["accumulated_return"] or 0.0) ** 2
            + (tech.stderr["accumulated_return"] or 0.0) ** 2
        )
    )
    gap = tech.mean["accumulated_return"] - base.mean["accumulated_return"]
    ordering = "holds" if gap >= -pooled else "DOES NOT hold"
    _announce(
        "protocol fidelity: 3 presets x 5 seeds, widths {}, tech-baseline gap {:.0f} "
        "vs pooled stderr {:.0f} (ordering {}; reported, not enforced)".format(
            widths, gap, pooled, ordering
        )
    )


# ---------------------------------------------------------------------------
# Criterion: ablation (no-sell)
# ---------------------------------------------------------------------------


def test_ablation_no_sell(dataset_dir, tmp_path):
    """--no-sell keeps holdings non-decreasing and the evaluation report
    carries the buy-and-hold allocation table."""
    out = tmp_path / "out"
    config_path = write_config(dataset_dir, out, seeds=[1], episodes=2)
    assert main(["train", "--config", str(config_path)]) == 0
    assert (
        main(
            [
                "evaluate",
                "--config",
                str(config_path),
                "--checkpoint",
                str(out / "checkpoint_seed1.json"),
                "--no-sell",
            ]
        )
        == 0
    )
    lines = (out / "trace.csv").read_text().splitlines()
    header = lines[0].split(",")
    h_cols = [i for i, name in enumerate(header) if name.startswith("h_")]
    prev = [0] * len(h_cols)
    for line in lines[1:]:
        cells = line.split(",")
        holdings = [int(cells[i]) for i in h_cols]
        assert all(h >= p for h, p in zip(holdings, prev))
        prev = holdings

    report = json.loads((out / "evaluation.json").read_text())
    assert report["no_sell"] is True
    allocation = report["allocation"]
    assert set(allocation.keys()) == {"AAA", "BBB"}
    assert all(isinstance(v, int) and v >= 0 for v in allocation.values())
    _announce(f"ablation no-sell: holdings monotone, allocation table {allocation}")


# ---------------------------------------------------------------------------
# Criterion: determinism
# ---------------------------------------------------------------------------


def test_determinism(dataset_dir, tmp_path):
    """Identical (config, seed, data) produce byte-identical metrics and
    checkpoints across two runs."""
    outputs = []
    for run in ("one", "two"):
        out = tmp_path / run
        config_path = write_config(dataset_dir, out, seeds=[5], episodes=2)
        assert main(["train", "--config", str(config_path)]) == 0
        outputs.append(
            {
                "report": (out / "report.json").read_bytes(),
                "curve": (out / "curve_seed5.csv").read_bytes(),
                "checkpoint": (out / "checkpoint_seed5.json").read_bytes(),
            }
        )
    assert outputs[0]["report"] == outputs[1]["report"]
    assert outputs[0]["curve"] == outputs[1]["curve"]
    assert outputs[0]["checkpoint"] == outputs[1]["checkpoint"]
    _announce("determinism: report, curve and checkpoint are byte-identical across two runs")
