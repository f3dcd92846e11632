import csv
import json
from pathlib import Path

import pytest

from conftest import random_walk_rows, rows_to_csv_text
from coincast.cli import entry, main

FAST_SECTIONS = {
    "n_steps_in": 8,
    "lstm": {"hidden_size": 4, "epochs": 2, "learning_rate": 0.01, "seed": 42},
    "gbt": {"n_rounds": 3, "max_depth": 2},
}


@pytest.fixture(scope="module", autouse=True)
def _scrub_seed_env():
    mp = pytest.MonkeyPatch()
    mp.delenv("TOOL_SEED", raising=False)
    yield
    mp.undo()


def write_workspace(root: Path, symbols=("BTC", "ETH"), T=240, extra=None) -> Path:
    """Lay out data CSVs plus a config.json under ``root``; returns config path."""
    data = {}
    for offset, symbol in enumerate(symbols):
        path = root / f"{symbol.lower()}.csv"
        path.write_text(
            rows_to_csv_text(
                random_walk_rows(T=T, seed=11 + offset, base=120.0 / (offset + 1)),
                symbol=symbol,
                name=symbol.title(),
            ),
            encoding="utf-8",
        )
        data[symbol] = str(path)
    tree = {"data": data, "output_dir": str(root / "out"), **FAST_SECTIONS}
    if extra:
        tree.update(extra)
    cfg = root / "config.json"
    cfg.write_text(json.dumps(tree, indent=2), encoding="utf-8")
    return cfg


def read_rows(path: Path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_workspace(root)
    return root, cfg


@pytest.fixture(scope="module")
def analyzed(workspace):
    root, cfg = workspace
    assert main(["analyze", "--config", str(cfg)]) == 0
    return root / "out" / "analysis"


@pytest.fixture(scope="module")
def trained(workspace):
    root, cfg = workspace
    assert main(["train", "--config", str(cfg)]) == 0
    return root / "out" / "model"


@pytest.fixture(scope="module")
def evaluated(workspace, trained):
    root, cfg = workspace
    assert main(["evaluate", "--config", str(cfg)]) == 0
    return root / "out" / "report"


class TestAnalyze:
    def test_all_artifacts_written(self, analyzed):
        expected = [
            "returns_histogram.csv",
            "rebased_prices.csv",
            "rolling_volatility.csv",
            "correlation_matrix.csv",
            "rolling_correlation.csv",
            "market_dominance.csv",
            "decomposition.csv",
            "backtest_curves.csv",
            "distribution_stats.json",
        ]
        for name in expected:
            assert (analyzed / name).is_file(), name

    def test_rebased_prices_start_at_100(self, analyzed):
        rows = read_rows(analyzed / "rebased_prices.csv")
        assert rows[0] == ["date", "BTC", "ETH"]
        assert rows[1][1] == "100.0"
        assert rows[1][2] == "100.0"

    def test_dominance_shares_sum_to_one(self, analyzed):
        rows = read_rows(analyzed / "market_dominance.csv")
        for row in rows[1:]:
            assert abs(sum(float(v) for v in row[1:]) - 1.0) < 1e-12

    def test_correlation_matrix_unit_diagonal(self, analyzed):
        rows = read_rows(analyzed / "correlation_matrix.csv")
        assert rows[0] == ["symbol", "BTC", "ETH"]
        assert rows[1][1] == "1.0"
        assert rows[2][2] == "1.0"
        # symmetric off-diagonal
        assert rows[1][2] == rows[2][1]

    def test_histogram_counts_cover_every_return(self, analyzed):
        rows = read_rows(analyzed / "returns_histogram.csv")
        per_symbol: dict = {}
        for row in rows[1:]:
            per_symbol[row[0]] = per_symbol.get(row[0], 0) + int(row[3])
        assert per_symbol == {"BTC": 239, "ETH": 239}

    def test_distribution_stats_payload(self, analyzed):
        stats = json.loads((analyzed / "distribution_stats.json").read_text())
        assert set(stats["symbols"]) == {"BTC", "ETH"}
        btc = stats["symbols"]["BTC"]
        assert btc["n_returns"] == 239
        for key in ("mean", "std", "skewness", "excess_kurtosis"):
            assert isinstance(btc[key], float)
        assert stats["backtest"]["symbol"] == "BTC"
        assert stats["backtest"]["final_strategy"] > 0

    def test_volatility_dates_skip_warmup(self, analyzed):
        rows = read_rows(analyzed / "rolling_volatility.csv")
        # 240 aligned dates, window 30 over returns -> 210 value rows
        assert len(rows) == 1 + 210

    def test_decomposition_reconstructs(self, analyzed):
        rows = read_rows(analyzed / "decomposition.csv")
        interior = [r for r in rows[1:] if r[2] != ""]
        assert interior, "expected interior rows with a defined trend"
        for row in interior[:20]:
            observed, trend, seasonal, residual = map(float, row[1:])
            assert abs(observed - (trend + seasonal + residual)) < 1e-9

    def test_unix_line_endings(self, analyzed):
        for name in ("rebased_prices.csv", "distribution_stats.json"):
            assert b"\r" not in (analyzed / name).read_bytes()

    def test_single_symbol_run(self, tmp_path):
        cfg = write_workspace(tmp_path, symbols=("SOL",))
        assert main(["analyze", "--config", str(cfg)]) == 0
        outdir = tmp_path / "out" / "analysis"
        corr = read_rows(outdir / "correlation_matrix.csv")
        assert corr == [["symbol", "SOL"], ["SOL", "1.0"]]
        roll = read_rows(outdir / "rolling_correlation.csv")
        assert roll == [["date"]]

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write_workspace(tmp_path)
        assert main(["analyze", "--config", str(cfg)]) == 0
        outdir = tmp_path / "out" / "analysis"
        before = {p.name: p.read_bytes() for p in outdir.iterdir()}
        assert main(["analyze", "--config", str(cfg)]) == 0
        after = {p.name: p.read_bytes() for p in outdir.iterdir()}
        assert before == after


class TestTrain:
    def test_model_directories(self, trained):
        for symbol in ("BTC", "ETH"):
            manifest_path = trained / symbol / "manifest.json"
            assert manifest_path.is_file()
            manifest = json.loads(manifest_path.read_text())
            listed = (
                [manifest["files"]["scaler"], manifest["files"]["lstm"], manifest["files"]["head"]]
                + manifest["files"]["hybrid_boosters"]
                + manifest["files"]["gbt_boosters"]
            )
            for fname in listed:
                assert (trained / symbol / fname).is_file(), fname

    def test_manifest_records_data_hash_and_config(self, trained):
        manifest = json.loads((trained / "BTC" / "manifest.json").read_text())
        assert len(manifest["data_hash"]) == 64
        assert manifest["config"]["lstm"]["epochs"] == 2
        assert manifest["config"]["gbt"]["n_rounds"] == 3
        assert "lambda" in manifest["config"]["gbt"]

    def test_loss_history_rows_match_epochs(self, trained):
        rows = read_rows(trained / "BTC" / "loss_history.csv")
        assert rows[0] == ["epoch", "loss"]
        assert len(rows) == 1 + 2

    def test_windows_not_dumped_by_default(self, trained):
        assert not (trained / "BTC" / "windows_train.csv").exists()

    def test_dump_windows_flag(self, tmp_path):
        cfg = write_workspace(tmp_path, symbols=("BTC",), T=60)
        code = main(
            ["train", "--config", str(cfg), "--set", "pipeline.dump_windows=true"]
        )
        assert code == 0
        for name in ("windows_train.csv", "windows_test.csv"):
            path = tmp_path / "out" / "model" / "BTC" / name
            assert path.is_file()
            header = path.read_text().splitlines()[0]
            assert header.startswith("sample,")

    def test_tool_seed_env_lands_in_manifest(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TOOL_SEED", "777")
        cfg = write_workspace(tmp_path, symbols=("BTC",), T=60)
        assert main(["train", "--config", str(cfg)]) == 0
        manifest = json.loads((tmp_path / "out" / "model" / "BTC" / "manifest.json").read_text())
        assert manifest["config"]["lstm"]["seed"] == 777

    def test_set_flag_beats_tool_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TOOL_SEED", "777")
        cfg = write_workspace(tmp_path, symbols=("BTC",), T=60)
        assert main(["train", "--config", str(cfg), "--set", "lstm.seed=555"]) == 0
        manifest = json.loads((tmp_path / "out" / "model" / "BTC" / "manifest.json").read_text())
        assert manifest["config"]["lstm"]["seed"] == 555


class TestEvaluate:
    def test_report_files(self, evaluated):
        for symbol in ("BTC", "ETH"):
            assert (evaluated / f"report_{symbol}.csv").is_file()
            assert (evaluated / f"report_{symbol}.json").is_file()

    def test_report_rows(self, evaluated):
        rows = read_rows(evaluated / "report_BTC.csv")
        assert rows[0] == ["model", "test_mape", "test_minmax_rmse"]
        assert [r[0] for r in rows[1:]] == ["hybrid", "lstm-only", "gbt-lags"]
        for row in rows[1:]:
            assert float(row[1]) >= 0.0
            assert float(row[2]) >= 0.0

    def test_json_matches_csv(self, evaluated):
        rows = read_rows(evaluated / "report_ETH.csv")
        payload = json.loads((evaluated / "report_ETH.json").read_text())
        assert len(payload["rows"]) == 3
        for csv_row, json_row in zip(rows[1:], payload["rows"]):
            assert json_row["model"] == csv_row[0]
            assert json_row["test_mape"] == float(csv_row[1])

    def test_explicit_model_root(self, workspace, trained, tmp_path):
        root, cfg = workspace
        code = main(
            [
                "evaluate",
                "--config", str(cfg),
                "--model", str(trained),
                "--set", f'output_dir="{tmp_path / "elsewhere"}"',
            ]
        )
        assert code == 0
        assert (tmp_path / "elsewhere" / "report" / "report_BTC.csv").is_file()

    def test_evaluate_without_model_fails_cleanly(self, tmp_path):
        cfg = write_workspace(tmp_path, symbols=("BTC",), T=60)
        assert main(["evaluate", "--config", str(cfg)]) == 3
        assert not (tmp_path / "out").exists()


class TestBacktest:
    def test_curves_and_trades(self, workspace):
        root, cfg = workspace
        assert main(["backtest", "--config", str(cfg)]) == 0
        for symbol in ("BTC", "ETH"):
            curves = read_rows(root / "out" / "backtest" / f"{symbol}_curves.csv")
            assert curves[0] == ["date", "strategy", "buy_and_hold"]
            assert len(curves) == 1 + 240
            assert float(curves[1][1]) == 10000.0
            assert float(curves[1][2]) == 10000.0
            trades = read_rows(root / "out" / "backtest" / f"{symbol}_trades.csv")
            assert trades[0] == ["entry_index", "entry_date", "exit_index", "exit_date"]
            for row in trades[1:]:
                assert int(row[0]) < int(row[2])


class TestFailureModes:
    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["analyze", "--config", str(tmp_path / "none.json")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({"data": {"BTC": "x.csv"}, "epochs": 5}))
        assert main(["analyze", "--config", str(cfg)]) == 2

    def test_set_typo(self, tmp_path):
        cfg = write_workspace(tmp_path, symbols=("BTC",), T=60)
        assert main(["train", "--config", str(cfg), "--set", "lstm.epoch=3"]) == 2

    def test_missing_data_file(self, tmp_path, capsys):
        cfg = tmp_path / "config.json"
        cfg.write_text(
            json.dumps(
                {
                    "data": {"BTC": str(tmp_path / "gone.csv")},
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        assert main(["analyze", "--config", str(cfg)]) == 3
        assert "BTC" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()
        assert not list(tmp_path.glob(".stage-*"))

    def test_corrupt_data_leaves_no_partial_artifacts(self, tmp_path, capsys):
        # first symbol is fine, second is corrupt: nothing may be committed
        cfg = write_workspace(tmp_path, symbols=("BTC", "ETH"), T=60)
        eth = tmp_path / "eth.csv"
        lines = eth.read_text().splitlines()
        parts = lines[5].split(",")
        parts[7] = "-1.0"  # negative close
        lines[5] = ",".join(parts)
        eth.write_text("\n".join(lines) + "\n")
        assert main(["train", "--config", str(cfg)]) == 3
        assert "line" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()
        assert not list(tmp_path.glob(".stage-*"))

    def test_training_divergence_exit_code(self, tmp_path, capsys):
        cfg = write_workspace(tmp_path, symbols=("BTC",), T=60)
        code = main(
            [
                "train",
                "--config", str(cfg),
                "--set", "lstm.optimizer=sgd",
                "--set", "lstm.learning_rate=1e30",
                "--set", "lstm.clip_norm=null",
                "--set", "lstm.epochs=6",
            ]
        )
        assert code == 4
        assert "diverged" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()

    def test_series_too_short_for_windows(self, tmp_path):
        cfg = write_workspace(tmp_path, symbols=("BTC",), T=10, extra={"n_steps_in": 30})
        assert main(["train", "--config", str(cfg)]) == 3


class TestEntryPoint:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        assert capsys.readouterr().out.startswith("coincast ")

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as excinfo:
            main([])
        assert excinfo.value.code == 2

    def test_entry_raises_system_exit(self, tmp_path, monkeypatch):
        cfg = write_workspace(tmp_path, symbols=("BTC",), T=60)
        monkeypatch.setattr(
            "sys.argv", ["coincast", "backtest", "--config", str(cfg)]
        )
        with pytest.raises(SystemExit) as excinfo:
            entry()
        assert excinfo.value.code == 0
        assert (tmp_path / "out" / "backtest" / "BTC_curves.csv").is_file()
