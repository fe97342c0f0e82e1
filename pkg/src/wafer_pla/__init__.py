"""Cross-process defect attribution on variable-length wafer routes."""

__version__ = "0.1.0"
