"""Command-line entry point: prepare, train, evaluate, indicators, report.

Runs are declared in a JSON config file; a few flags override the config for
quick experiments. Exit codes: 0 success, 1 usage, 2 data error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Optional

import numpy as np

from . import backtest
from .indicators import INDICATOR_NAMES, IndicatorBlock, compute_block
from .market_data import (
    AlignedPanel,
    AssetSeries,
    Bar,
    DataError,
    align_calendar,
    load_calendar,
    load_ohlcv,
    split,
)
from .neural import decode_array, encode_array
from .sentiment import SentimentSeries, build_series, load_keyword_map, load_scored_headlines
from .td3_agent import TD3Agent, TD3Config
from .trading_env import EnvConfig, TradingEnv, write_trace

CACHE_ENV_VAR = "DEEPTRADER_CACHE"

# The experiment protocol defaults: 5 seeds x 200 episodes.
DEFAULT_EPISODES = 200
DEFAULT_SEEDS = [0, 1, 2, 3, 4]


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    csv_paths: dict[str, str]
    calendar_path: str
    env: EnvConfig
    agent: TD3Config
    episodes: int
    seeds: list[int]
    split_date: Optional[date]
    learn_on_test: bool
    output_dir: str
    scored_csv: Optional[str] = None
    keywords_path: Optional[str] = None
    cache_dir: Optional[str] = None

    @property
    def symbols(self) -> list[str]:
        return list(self.csv_paths.keys())


def load_run_config(path: str | Path, overrides: Optional[dict] = None) -> RunConfig:
    """Parse and validate the declarative run config, applying CLI overrides."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such config file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    overrides = overrides or {}

    data = doc.get("data", {})
    if "csv" not in data or not isinstance(data["csv"], dict) or not data["csv"]:
        raise UsageError("config data.csv must map symbols to CSV paths")
    if "calendar" not in data:
        raise UsageError("config data.calendar is required")

    env_doc = dict(doc.get("env", {}))
    env_doc.setdefault("initial_capital", 100_000.0)
    env_doc.setdefault("k_max", 100)
    env_doc["price_field"] = data.get("price_field", "adj_close")
    if "preset" in overrides:
        env_doc["preset"] = overrides["preset"]
    env_doc.setdefault("preset", "tech")
    try:
        env = EnvConfig(**env_doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid env config: {exc}") from None

    agent_doc = dict(doc.get("agent", {}))
    if "hidden" in agent_doc:
        agent_doc["hidden"] = tuple(agent_doc["hidden"])
    try:
        agent = TD3Config(**agent_doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid agent config: {exc}") from None

    run_doc = doc.get("run", {})
    episodes = int(overrides.get("episodes", run_doc.get("episodes", DEFAULT_EPISODES)))
    seeds = list(overrides.get("seeds", run_doc.get("seeds", DEFAULT_SEEDS)))
    if episodes < 1 or not seeds:
        raise UsageError("run.episodes must be >= 1 and run.seeds nonempty")
    split_raw = overrides.get("split", run_doc.get("split"))
    split_date = date.fromisoformat(split_raw) if split_raw else None

    sentiment_doc = doc.get("sentiment", {})
    config = RunConfig(
        csv_paths=dict(data["csv"]),
        calendar_path=data["calendar"],
        env=env,
        agent=agent,
        episodes=episodes,
        seeds=seeds,
        split_date=split_date,
        learn_on_test=bool(run_doc.get("learn_on_test", False)),
        output_dir=str(overrides.get("output", doc.get("output_dir", "runs/out"))),
        scored_csv=sentiment_doc.get("scored_csv"),
        keywords_path=sentiment_doc.get("keywords"),
        cache_dir=doc.get("cache_dir"),
    )

    if config.env.preset == "full" and (not config.scored_csv or not config.keywords_path):
        raise UsageError("preset 'full' requires sentiment.scored_csv and sentiment.keywords")
    missing = [p for p in _input_paths(config) if not Path(p).exists()]
    if missing:
        raise DataError(f"missing input files: {missing}")
    return config


def _input_paths(config: RunConfig) -> list[str]:
    paths = list(config.csv_paths.values()) + [config.calendar_path]
    if config.scored_csv:
        paths.append(config.scored_csv)
    if config.keywords_path:
        paths.append(config.keywords_path)
    return paths


# ---------------------------------------------------------------------------
# prepare: content-addressed dataset cache
# ---------------------------------------------------------------------------


@dataclass
class PreparedData:
    panel: AlignedPanel
    blocks: list[IndicatorBlock]
    sentiment: Optional[SentimentSeries]
    cache_hit: bool
    cache_path: Path


def _cache_key(config: RunConfig) -> str:
    digest = hashlib.sha256()
    for symbol in config.symbols:
        digest.update(symbol.encode())
        digest.update(Path(config.csv_paths[symbol]).read_bytes())
    digest.update(Path(config.calendar_path).read_bytes())
    for optional in (config.scored_csv, config.keywords_path):
        if optional:
            digest.update(Path(optional).read_bytes())
    digest.update(f"lookback={config.env.lookback};price={config.env.price_field}".encode())
    return digest.hexdigest()[:24]


def _cache_root(config: RunConfig) -> Path:
    env_dir = os.environ.get(CACHE_ENV_VAR)
    if env_dir:
        return Path(env_dir)
    if config.cache_dir:
        return Path(config.cache_dir)
    return Path(config.output_dir) / "cache"


def _panel_arrays(panel: AlignedPanel) -> dict:
    return {name: encode_array(panel.field(name)) for name in ("open", "high", "low", "close", "adj_close", "volume")}


def _panel_from_arrays(symbols: list[str], dates: list[str], fields: dict) -> AlignedPanel:
    arrays = {name: decode_array(fields[name]) for name in fields}
    parsed_dates = tuple(date.fromisoformat(d) for d in dates)
    grid = []
    for i in range(len(symbols)):
        grid.append(
            tuple(
                Bar(
                    date=parsed_dates[t],
                    open=arrays["open"][i, t],
                    high=arrays["high"][i, t],
                    low=arrays["low"][i, t],
                    close=arrays["close"][i, t],
                    adj_close=arrays["adj_close"][i, t],
                    volume=arrays["volume"][i, t],
                )
                for t in range(len(parsed_dates))
            )
        )
    return AlignedPanel(symbols=tuple(symbols), dates=parsed_dates, bars=tuple(grid))


def _blocks_from_array(symbols: tuple[str, ...], stacked: np.ndarray) -> list[IndicatorBlock]:
    blocks = []
    for i, symbol in enumerate(symbols):
        columns = {name: stacked[i, :, j].copy() for j, name in enumerate(INDICATOR_NAMES)}
        blocks.append(IndicatorBlock(symbol=symbol, **columns))
    return blocks


def prepare_dataset(config: RunConfig) -> PreparedData:
    """Align inputs into cached panel + indicator + sentiment artifacts.

    The cache key hashes every input file plus the lookback window and price
    field, so unchanged reruns are pure cache hits.
    """
    root = _cache_root(config)
    root.mkdir(parents=True, exist_ok=True)
    cache_path = root / f"dataset_{_cache_key(config)}.json"

    if cache_path.exists():
        doc = json.loads(cache_path.read_text(encoding="utf-8"))
        panel = _panel_from_arrays(doc["symbols"], doc["dates"], doc["fields"])
        blocks = _blocks_from_array(panel.symbols, decode_array(doc["indicators"]))
        sentiment = None
        if doc["sentiment"] is not None:
            sentiment = SentimentSeries(
                symbols=panel.symbols,
                dates=panel.dates,
                scores=decode_array(doc["sentiment"]).astype(np.int64),
            )
        return PreparedData(panel, blocks, sentiment, cache_hit=True, cache_path=cache_path)

    series = [load_ohlcv(config.csv_paths[s], s) for s in config.symbols]
    calendar = load_calendar(config.calendar_path)
    panel = align_calendar(series, calendar)
    blocks = compute_block(panel, config.env.lookback, config.env.price_field)

    sentiment = None
    if config.scored_csv and config.keywords_path:
        headlines = load_scored_headlines(config.scored_csv)
        keywords = load_keyword_map(config.keywords_path)
        sentiment = build_series(headlines, keywords, panel)

    doc = {
        "symbols": list(panel.symbols),
        "dates": [d.isoformat() for d in panel.dates],
        "fields": _panel_arrays(panel),
        "indicators": encode_array(np.stack([b.matrix() for b in blocks])),
        "sentiment": None if sentiment is None else encode_array(sentiment.scores.astype(np.float64)),
        "lookback": config.env.lookback,
        "price_field": config.env.price_field,
    }
    cache_path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")), encoding="utf-8")
    return PreparedData(panel, blocks, sentiment, cache_hit=False, cache_path=cache_path)


def _slice_sentiment(sentiment: Optional[SentimentSeries], panel: AlignedPanel) -> Optional[SentimentSeries]:
    """Restrict a full-panel sentiment series to a split panel's date range."""
    if sentiment is None:
        return None
    index = {d: t for t, d in enumerate(sentiment.dates)}
    cols = [index[d] for d in panel.dates]
    return SentimentSeries(symbols=panel.symbols, dates=panel.dates, scores=sentiment.scores[:, cols])


def _split_panels(config: RunConfig, prepared: PreparedData) -> tuple[AlignedPanel, Optional[AlignedPanel]]:
    if config.split_date is None:
        return prepared.panel, None
    return split(prepared.panel, config.split_date)


def _build_env(config: RunConfig, panel: AlignedPanel, sentiment: Optional[SentimentSeries]) -> TradingEnv:
    kwargs = {}
    if config.env.preset == "full":
        kwargs["sentiment"] = _slice_sentiment(sentiment, panel)
    return TradingEnv(panel, config.env, **kwargs)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _write_curve(path: Path, curve: list[backtest.EpisodeStats]) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["episode", "total_reward", "sharpe", "commission"])
        for i, stats in enumerate(curve, start=1):
            sharpe = "" if stats.sharpe is None else repr(stats.sharpe)
            writer.writerow([i, repr(stats.total_reward), sharpe, repr(stats.commission_total)])


def _train_single_seed(config: RunConfig, seed: int) -> dict:
    """Train one seed end to end and write its artifacts; returns final metrics."""
    prepared = prepare_dataset(config)
    train_panel, _ = _split_panels(config, prepared)
    env = _build_env(config, train_panel, prepared.sentiment)
    agent = backtest.make_agent(env, config.agent, seed)
    curve = backtest.train_agent(env, agent, config.episodes)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_curve(out / f"curve_seed{seed}.csv", curve)
    agent.save(out / f"checkpoint_seed{seed}.json")
    final = curve[-1]
    return {
        "seed": seed,
        "accumulated_return": final.total_reward,
        "sharpe": final.sharpe,
        "commission": final.commission_total,
        "final_value": final.final_value,
    }


def _train_seed_worker(args: tuple[str, dict, int]) -> dict:
    config_path, overrides, seed = args
    config = load_run_config(config_path, overrides)
    return _train_single_seed(config, seed)


def cmd_train(config: RunConfig, config_path: str, overrides: dict, jobs: int) -> dict:
    prepared = prepare_dataset(config)  # warm the cache before any workers fork
    print(f"prepared dataset: {prepared.panel.n_assets} assets x {prepared.panel.n_dates} dates "
          f"(cache {'hit' if prepared.cache_hit else 'miss'}: {prepared.cache_path})")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            finals = list(pool.map(_train_seed_worker, [(config_path, overrides, s) for s in config.seeds]))
    else:
        finals = [_train_single_seed(config, seed) for seed in config.seeds]

    per_run = {
        "accumulated_return": [f["accumulated_return"] for f in finals],
        "sharpe": [f["sharpe"] for f in finals],
        "commission": [f["commission"] for f in finals],
    }
    aggregate = _aggregate_from_per_run(config.seeds, per_run)
    report = {
        "preset": config.env.preset,
        "episodes": config.episodes,
        "seeds": config.seeds,
        "observation_size": _build_env(config, _split_panels(config, prepared)[0], prepared.sentiment).observation_size,
        "aggregate": aggregate,
        "per_seed": finals,
    }
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2), encoding="utf-8")
    print(f"wrote {out / 'report.json'}")
    for metric in backtest.METRICS:
        block = aggregate["metrics"][metric]
        print(f"  {metric}: mean={block['mean']} stderr={block['stderr']}")
    return report


def _aggregate_from_per_run(seeds: list[int], per_run: dict[str, list]) -> dict:
    metrics = {}
    for metric, values in per_run.items():
        defined = [v for v in values if v is not None]
        if defined:
            mean = float(np.mean(defined))
            stderr = (
                float(np.std(defined, ddof=1) / np.sqrt(len(defined))) if len(defined) >= 2 else None
            )
        else:
            mean = stderr = None
        metrics[metric] = {"mean": mean, "stderr": stderr, "per_run": values}
    return {"seeds": seeds, "metrics": metrics}


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def cmd_evaluate(
    config: RunConfig,
    checkpoint: str,
    no_sell: bool,
    learn_on_test: bool,
) -> dict:
    if not Path(checkpoint).exists():
        raise DataError(f"no such checkpoint: {checkpoint}")
    prepared = prepare_dataset(config)
    _, test_panel = _split_panels(config, prepared)
    panel = test_panel if test_panel is not None else prepared.panel

    agent = TD3Agent.load(checkpoint)
    if no_sell:
        stats = backtest.ablation_no_sell(
            panel,
            config.env,
            agent,
            sentiment=_slice_sentiment(prepared.sentiment, panel) if config.env.preset == "full" else None,
            learn_on_test=learn_on_test,
        )
    else:
        env = _build_env(config, panel, prepared.sentiment)
        stats = backtest.evaluate(env, agent, learn_on_test=learn_on_test)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        **backtest.stats_to_dict(stats),
        "no_sell": no_sell,
        "learn_on_test": learn_on_test,
        "allocation": stats.final_holdings,
    }
    (out / "evaluation.json").write_text(json.dumps(report, sort_keys=True, indent=2), encoding="utf-8")
    write_trace(out / "trace.csv", panel.symbols, stats.records)
    print(f"wrote {out / 'evaluation.json'} and {out / 'trace.csv'}")
    print(
        f"  total_reward={stats.total_reward:.2f} sharpe={stats.sharpe} "
        f"commission={stats.commission_total:.2f}"
    )
    if no_sell:
        print("  buy-and-hold allocation:")
        for symbol, shares in stats.final_holdings.items():
            print(f"    {symbol}: {shares}")
    return report


# ---------------------------------------------------------------------------
# indicators dump
# ---------------------------------------------------------------------------


def cmd_indicators(config: RunConfig, out_path: str) -> None:
    prepared = prepare_dataset(config)
    panel = prepared.panel
    with Path(out_path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = ["date"] + [f"{s}_{name}" for s in panel.symbols for name in INDICATOR_NAMES]
        writer.writerow(header)
        matrices = [b.matrix() for b in prepared.blocks]
        for t, day in enumerate(panel.dates):
            row: list = [day.isoformat()]
            for m in matrices:
                row.extend(repr(v) for v in m[t])
            writer.writerow(row)
    print(f"wrote {out_path}")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

_REPORT_ROWS = (
    ("accumulated_return", "Accumulated Return"),
    ("sharpe", "Sharpe Ratio"),
    ("commission", "Commission"),
)


def cmd_report(run_dirs: list[str], out_path: Optional[str]) -> dict:
    """Combine train reports into one Table-1-style comparison."""
    columns = {}
    for run_dir in run_dirs:
        report_path = Path(run_dir) / "report.json"
        if not report_path.exists():
            raise DataError(f"no report.json under {run_dir}")
        doc = json.loads(report_path.read_text(encoding="utf-8"))
        columns[doc.get("preset", run_dir)] = doc["aggregate"]["metrics"]

    def _cell(block: dict) -> str:
        if block["mean"] is None:
            return "undefined"
        if block["stderr"] is None:
            return f"{block['mean']:.2f}"
        return f"{block['mean']:.2f} +/- {block['stderr']:.2f}"

    names = list(columns.keys())
    widths = [max(20, *(len(n) + 2 for n in names))] * len(names)
    print(f"{'Metric':<22}" + "".join(f"{n:<{w}}" for n, w in zip(names, widths)))
    combined = {"columns": names, "rows": {}}
    for key, label in _REPORT_ROWS:
        cells = [_cell(columns[n][key]) for n in names]
        combined["rows"][key] = {n: columns[n][key] for n in names}
        print(f"{label:<22}" + "".join(f"{c:<{w}}" for c, w in zip(cells, widths)))

    if out_path:
        Path(out_path).write_text(json.dumps(combined, sort_keys=True, indent=2), encoding="utf-8")
        print(f"wrote {out_path}")
    return combined


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse's exit-code-2 usage errors to 1
        raise UsageError(message)


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    for key in ("episodes", "preset", "output", "split"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "seeds", None):
        overrides["seeds"] = [int(s) for s in args.seeds.split(",")]
    return overrides


def build_parser() -> _Parser:
    parser = _Parser(prog="deeptrader", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--episodes", type=int, help="override run.episodes")
        p.add_argument("--seeds", help="override run.seeds, comma separated")
        p.add_argument("--preset", choices=["baseline", "tech", "full"], help="override env.preset")
        p.add_argument("--split", help="override run.split (ISO date)")
        p.add_argument("--output", help="override output_dir")

    p_prepare = sub.add_parser("prepare", help="build and cache the aligned dataset")
    add_config_args(p_prepare)

    p_train = sub.add_parser("train", help="train the agent across seeds")
    add_config_args(p_train)
    p_train.add_argument("--jobs", type=int, default=1, help="parallel workers across seeds")

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    add_config_args(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--no-sell", action="store_true", help="disable the sell action")
    p_eval.add_argument("--learn-on-test", action="store_true")

    p_ind = sub.add_parser("indicators", help="dump the indicator block as CSV")
    add_config_args(p_ind)
    p_ind.add_argument("--out", help="output CSV path (default <output_dir>/indicators.csv)")

    p_rep = sub.add_parser("report", help="combine train reports into one table")
    p_rep.add_argument("run_dirs", nargs="+", help="train output directories")
    p_rep.add_argument("--out", help="write the combined report JSON here")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "report":
            cmd_report(args.run_dirs, args.out)
            return 0

        overrides = _collect_overrides(args)
        config = load_run_config(args.config, overrides)
        if args.command == "prepare":
            prepared = prepare_dataset(config)
            status = "hit" if prepared.cache_hit else "miss"
            print(f"cache {status}: {prepared.cache_path}")
        elif args.command == "train":
            cmd_train(config, args.config, overrides, jobs=args.jobs)
        elif args.command == "evaluate":
            cmd_evaluate(
                config,
                args.checkpoint,
                args.no_sell,
                args.learn_on_test or config.learn_on_test,
            )
        elif args.command == "indicators":
            out_path = args.out or str(Path(config.output_dir) / "indicators.csv")
            Path(out_path).parent.mkdir(parents=True, exist_ok=True)
            cmd_indicators(config, out_path)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
