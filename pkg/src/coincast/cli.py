"""Command-line interface: analyze | train | evaluate | backtest.

Every command takes --config pointing at a JSON file, plus any number of
--set dotted.key=value overrides; the TOOL_SEED environment variable
overrides the configured seed (flags beat the environment, which beats the
file). Artifacts are written to a temporary directory first and moved into
the configured output directory only when the whole command has succeeded,
so a failed run never leaves partial files behind.

Exit codes: 0 success, 2 configuration or usage error, 3 data/input error,
4 numeric training failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, analysis, pipeline
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    DomainError,
    SchemaError,
    ShapeError,
    SizingError,
    StateError,
    TrainingError,
    ValidationError,
)
from .market_data import align_on_dates, load_csv, parse_csv, rebase_to_100, windows_to_csv

_DATA_ERRORS = (SchemaError, ValidationError, SizingError, DomainError, ShapeError, StateError)


def _fmt(value) -> str:
    """CSV cell for a float: repr for full round-trip fidelity, blank for NaN."""
    v = float(value)
    if not math.isfinite(v):
        return ""
    return repr(v)


class _Stage:
    """Collects output files in a temp dir next to the target, then commits
    them with per-file atomic renames."""

    def __init__(self, outdir: Path):
        self.final = outdir
        outdir.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".stage-", dir=str(outdir.parent)))

    def path(self, relative: str) -> Path:
        p = self.tmp / relative
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_text(self, relative: str, text: str) -> None:
        self.path(relative).write_text(text, encoding="utf-8")

    def write_csv(self, relative: str, header, rows) -> None:
        with open(self.path(relative), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)

    def write_json(self, relative: str, payload) -> None:
        self.write_text(relative, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def commit(self) -> None:
        for root, _, files in os.walk(self.tmp):
            for name in files:
                src = Path(root) / name
                rel = src.relative_to(self.tmp)
                dest = self.final / rel
                dest.parent.mkdir(parents=True, exist_ok=True)
                os.replace(src, dest)
        shutil.rmtree(self.tmp, ignore_errors=True)

    def abort(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _read_series(symbol: str, path: str):
    try:
        return load_csv(path)
    except OSError as exc:
        raise ValidationError(f"cannot read data file for {symbol}: {exc}") from None


def _load_all(cfg: RunConfig) -> dict:
    return {symbol: _read_series(symbol, path) for symbol, path in cfg.data.items()}


# --- analyze ----------------------------------------------------------------


def _returns_date_offset(basis: str) -> int:
    # A window ending at returns index j spans dates up to j+1; on raw prices
    # the same window ends at date index j.
    return 1 if basis == "returns" else 0


def cmd_analyze(cfg: RunConfig, stage: _Stage) -> None:
    series_map = _load_all(cfg)
    symbols = list(series_map)
    a = cfg.analysis

    # Per-symbol figures over each asset's full history.
    hist_rows = []
    stats_payload: dict = {"symbols": {}}
    for symbol in symbols:
        returns = analysis.daily_returns(series_map[symbol].column("close"))
        counts, edges = analysis.returns_histogram(returns, a.histogram_bins)
        for b in range(counts.size):
            hist_rows.append([symbol, _fmt(edges[b]), _fmt(edges[b + 1]), str(int(counts[b]))])
        moments = analysis.distribution_stats(returns)
        stats_payload["symbols"][symbol] = {
            "n_returns": int(returns.size),
            "mean": moments.mean,
            "std": moments.std,
            "skewness": moments.skewness,
            "excess_kurtosis": moments.excess_kurtosis,
        }
    stage.write_csv(
        "analysis/returns_histogram.csv",
        ["symbol", "bin_left", "bin_right", "count"],
        hist_rows,
    )

    # Cross-asset figures on the common calendar.
    dates, aligned = align_on_dates([series_map[s] for s in symbols])
    iso = [d.isoformat() for d in dates]

    rebased = [rebase_to_100(s) for s in aligned]
    stage.write_csv(
        "analysis/rebased_prices.csv",
        ["date"] + symbols,
        ([iso[t]] + [_fmt(col[t]) for col in rebased] for t in range(len(dates))),
    )

    aligned_returns = [analysis.daily_returns(s.column("close")) for s in aligned]
    vols = [analysis.rolling_volatility(r, a.volatility_window) for r in aligned_returns]
    vol_dates = iso[a.volatility_window:]
    stage.write_csv(
        "analysis/rolling_volatility.csv",
        ["date"] + symbols,
        ([vol_dates[j]] + [_fmt(v[j]) for v in vols] for j in range(len(vol_dates))),
    )

    basis_series = (
        aligned_returns
        if a.correlation_basis == "returns"
        else [s.column("close") for s in aligned]
    )
    if len(symbols) >= 2:
        corr = analysis.correlation_matrix(basis_series)
    else:
        corr = np.ones((1, 1))
    stage.write_csv(
        "analysis/correlation_matrix.csv",
        ["symbol"] + symbols,
        ([symbols[i]] + [_fmt(corr[i, j]) for j in range(len(symbols))] for i in range(len(symbols))),
    )

    pairs = [(i, j) for i in range(len(symbols)) for j in range(len(symbols)) if i < j]
    pair_names = [f"{symbols[i]}_{symbols[j]}" for i, j in pairs]
    if pairs:
        window = a.correlation_window
        rolled = [
            analysis.rolling_correlation(basis_series[i], basis_series[j], window)
            for i, j in pairs
        ]
        offset = window - 1 + _returns_date_offset(a.correlation_basis)
        roll_dates = iso[offset:]
        rows = (
            [roll_dates[t]] + [_fmt(r[t]) for r in rolled] for t in range(len(roll_dates))
        )
    else:
        rows = ()
    stage.write_csv("analysis/rolling_correlation.csv", ["date"] + pair_names, rows)

    caps = [s.column("marketcap") for s in aligned]
    shares = analysis.market_dominance(caps)
    stage.write_csv(
        "analysis/market_dominance.csv",
        ["date"] + symbols,
        ([iso[t]] + [_fmt(shares[i, t]) for i in range(len(symbols))] for t in range(len(dates))),
    )

    # Decomposition and benchmark backtest are single-asset figures; use the
    # first configured symbol, full history.
    lead = symbols[0]
    lead_series = series_map[lead]
    closes = lead_series.column("close")
    lead_iso = [d.isoformat() for d in lead_series.dates()]
    decomp = analysis.decompose_additive(closes, a.decomposition_period)
    stage.write_csv(
        "analysis/decomposition.csv",
        ["date", "observed", "trend", "seasonal", "residual"],
        (
            [lead_iso[t], _fmt(closes[t]), _fmt(decomp.trend[t]), _fmt(decomp.seasonal[t]), _fmt(decomp.residual[t])]
            for t in range(closes.size)
        ),
    )
    stats_payload["decomposition"] = {"symbol": lead, "period": a.decomposition_period}

    result = analysis.sma_crossover_backtest(
        closes, a.sma_fast, a.sma_slow, a.initial_capital, a.cost_rate
    )
    _write_backtest_curves(stage, "analysis/backtest_curves.csv", lead_iso, result)
    stats_payload["backtest"] = {
        "symbol": lead,
        "fast": a.sma_fast,
        "slow": a.sma_slow,
        "cost_rate": a.cost_rate,
        "final_strategy": result.final_strategy,
        "final_buy_and_hold": result.final_buy_and_hold,
        "n_trades": len(result.trades),
    }

    stage.write_json("analysis/distribution_stats.json", stats_payload)


def _write_backtest_curves(stage: _Stage, relative: str, iso_dates, result) -> None:
    stage.write_csv(
        relative,
        ["date", "strategy", "buy_and_hold"],
        (
            [iso_dates[t], _fmt(result.strategy[t]), _fmt(result.buy_and_hold[t])]
            for t in range(result.strategy.size)
        ),
    )


# --- train / evaluate / backtest --------------------------------------------


def cmd_train(cfg: RunConfig, stage: _Stage) -> None:
    lstm_cfg = cfg.lstm_train_config()
    tree_params = cfg.tree_params()
    for symbol, path in cfg.data.items():
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise ValidationError(f"cannot read data file for {symbol}: {exc}") from None
        series = parse_csv(raw)
        train_ds, test_ds = pipeline.prepare_datasets(
            series,
            cfg.features,
            cfg.target,
            cfg.n_steps_in,
            cfg.n_steps_out,
            cfg.train_fraction,
        )
        stage1 = pipeline.fit_temporal_extractor(train_ds, lstm_cfg)
        hybrid = pipeline.train_hybrid(
            train_ds,
            lstm_cfg,
            tree_params,
            cfg.gbt.n_rounds,
            cfg.pipeline.horizon_mode,
            stage1=stage1,
        )
        lstm_baseline = pipeline.train_baseline_lstm(train_ds, lstm_cfg, stage1=stage1)
        gbt_baseline = pipeline.train_baseline_gbt(
            train_ds, tree_params, cfg.gbt.n_rounds, cfg.pipeline.horizon_mode
        )
        bundle = pipeline.TrainedBundle(
            hybrid=hybrid,
            lstm_baseline=lstm_baseline,
            gbt_baseline=gbt_baseline,
            config_snapshot=cfg.to_dict(),
            data_hash=hashlib.sha256(raw).hexdigest(),
            feature_names=tuple(cfg.features),
            n_steps_in=cfg.n_steps_in,
        )
        model_dir = stage.path(f"model/{symbol}/manifest.json").parent
        pipeline.save_bundle(model_dir, bundle)
        if cfg.pipeline.dump_windows:
            for name, ds in (("windows_train.csv", train_ds), ("windows_test.csv", test_ds)):
                with open(model_dir / name, "w", encoding="utf-8", newline="") as fh:
                    windows_to_csv(ds, fh)


def cmd_evaluate(cfg: RunConfig, stage: _Stage, model_root: str | None) -> None:
    root = Path(model_root) if model_root else Path(cfg.output_dir) / "model"
    for symbol, path in cfg.data.items():
        bundle = pipeline.load_bundle(root / symbol)
        snapshot = RunConfig.from_dict(bundle.config_snapshot)
        series = _read_series(symbol, path)
        _, test_ds = pipeline.prepare_datasets(
            series,
            snapshot.features,
            snapshot.target,
            snapshot.n_steps_in,
            snapshot.n_steps_out,
            snapshot.train_fraction,
            scaler=bundle.hybrid.scaler,
        )
        report = pipeline.evaluate(
            [bundle.hybrid, bundle.lstm_baseline, bundle.gbt_baseline],
            test_ds,
            mape_epsilon=cfg.pipeline.mape_epsilon,
        )
        stage.write_text(f"report/report_{symbol}.csv", report.to_csv_text())
        stage.write_text(f"report/report_{symbol}.json", report.to_json_text())


def cmd_backtest(cfg: RunConfig, stage: _Stage) -> None:
    a = cfg.analysis
    for symbol, path in cfg.data.items():
        series = _read_series(symbol, path)
        closes = series.column("close")
        iso = [d.isoformat() for d in series.dates()]
        result = analysis.sma_crossover_backtest(
            closes, a.sma_fast, a.sma_slow, a.initial_capital, a.cost_rate
        )
        _write_backtest_curves(stage, f"backtest/{symbol}_curves.csv", iso, result)
        stage.write_csv(
            f"backtest/{symbol}_trades.csv",
            ["entry_index", "entry_date", "exit_index", "exit_date"],
            (
                [str(entry), iso[entry], str(exit_), iso[exit_]]
                for entry, exit_ in result.trades
            ),
        )


# --- entry point ------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coincast",
        description="Exploratory analysis and hybrid LSTM + boosted-tree forecasting over OHLCV CSVs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subcommands = {
        "analyze": "write exploratory figure data (returns, volatility, correlation, dominance, decomposition)",
        "train": "fit the hybrid forecaster and both baselines for every configured symbol",
        "evaluate": "score saved models on the held-out windows and write the comparison report",
        "backtest": "run the SMA-crossover strategy against buy-and-hold",
    }
    for name, help_text in subcommands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config value by its dotted name (repeatable)",
        )
        if name == "evaluate":
            p.add_argument(
                "--model",
                default=None,
                help="model directory to load (default: <output_dir>/model)",
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, os.environ)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    stage = _Stage(Path(cfg.output_dir))
    try:
        if args.command == "analyze":
            cmd_analyze(cfg, stage)
        elif args.command == "train":
            cmd_train(cfg, stage)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, stage, args.model)
        else:
            cmd_backtest(cfg, stage)
        stage.commit()
    except ConfigError as exc:
        stage.abort()
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        stage.abort()
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TrainingError as exc:
        stage.abort()
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        stage.abort()
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        stage.abort()
        raise
    return 0


def entry() -> None:
    raise SystemExit(main())
