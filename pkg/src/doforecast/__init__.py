"""Multi-step time-series forecasting with hand-derived gradients."""

__version__ = "0.1.0"
