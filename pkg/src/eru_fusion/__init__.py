"""Late fusion of two referent detectors guided by a pointing ray, plus the evaluation harness around it."""

__version__ = "0.1.0"
