"""Daily news features for day-ahead half-hourly electricity demand forecasting."""

__version__ = "0.1.0"
