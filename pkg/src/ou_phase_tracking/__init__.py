"""Phase tracking under Ornstein-Uhlenbeck phase noise: filters, smoothers and their steady-state errors."""

__version__ = "0.1.0"
