"""coincast: exploratory analysis and hybrid forecasting for OHLCV crypto data."""

__version__ = "0.1.0"
