"""Shared fixtures and the acceptance-criteria summary hook."""
import csv
import io
from datetime import date, timedelta

import numpy as np
import pytest

from coincast.market_data import OhlcvRecord, PriceSeries

HEADER = ["SNo", "Name", "Symbol", "Date", "High", "Low", "Open", "Close", "Volume", "Marketcap"]


def random_walk_rows(T=240, seed=11, base=120.0, start=date(2017, 1, 1)):
    """Deterministic random-walk OHLCV rows, one dict per day."""
    rng = np.random.default_rng(seed)
    steps = rng.normal(0.0005, 0.02, size=T)
    close = base * np.exp(np.cumsum(steps))
    open_ = np.concatenate([[base], close[:-1]])
    spread = np.abs(rng.normal(0.0, 0.01, size=T))
    high = np.maximum(open_, close) * (1.0 + spread)
    low = np.minimum(open_, close) * (1.0 - spread)
    volume = rng.uniform(1e5, 5e6, size=T)
    cap = close * 1.7e6
    rows = []
    for i in range(T):
        rows.append(
            {
                "date": start + timedelta(days=i),
                "open": float(open_[i]),
                "high": float(high[i]),
                "low": float(low[i]),
                "close": float(close[i]),
                "volume": float(volume[i]),
                "marketcap": float(cap[i]),
            }
        )
    return rows


def rows_to_series(rows, symbol="BTC", name="Bitcoin") -> PriceSeries:
    records = tuple(
        OhlcvRecord(
            day=r["date"],
            open=r["open"],
            high=r["high"],
            low=r["low"],
            close=r["close"],
            volume=r["volume"],
            marketcap=r["marketcap"],
        )
        for r in rows
    )
    return PriceSeries(symbol=symbol, name=name, records=records)


def rows_to_csv_text(rows, symbol="BTC", name="Bitcoin") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for i, r in enumerate(rows, start=1):
        writer.writerow(
            [
                str(i),
                name,
                symbol,
                r["date"].isoformat() + " 23:59:59",
                repr(r["high"]),
                repr(r["low"]),
                repr(r["open"]),
                repr(r["close"]),
                repr(r["volume"]),
                repr(r["marketcap"]),
            ]
        )
    return buf.getvalue()


@pytest.fixture
def walk_series():
    return rows_to_series(random_walk_rows())


@pytest.fixture
def write_asset_csv(tmp_path):
    """Factory: write a synthetic asset CSV, return its path."""

    def _write(symbol="BTC", seed=11, T=240, base=120.0, name=None):
        text = rows_to_csv_text(
            random_walk_rows(T=T, seed=seed, base=base),
            symbol=symbol,
            name=name or symbol.title(),
        )
        path = tmp_path / f"{symbol.lower()}.csv"
        path.write_text(text, encoding="utf-8")
        return path

    return _write


# --- acceptance summary -------------------------------------------------
# One PASS/FAIL line per acceptance criterion at the end of the run.

_acceptance_outcomes = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call":
        _acceptance_outcomes[report.nodeid] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and not report.passed:
        _acceptance_outcomes[report.nodeid] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_acceptance_outcomes):
        name = nodeid.split("::")[-1]
        label = name.replace("test_criterion_", "criterion ").replace("_", " ")
        terminalreporter.write_line(f"{label}: {_acceptance_outcomes[nodeid]}")
