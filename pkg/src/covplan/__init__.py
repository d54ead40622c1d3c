"""covplan - incremental covariance recovery and belief space planning."""

__version__ = "0.1.0"
