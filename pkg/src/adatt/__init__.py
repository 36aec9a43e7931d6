"""Adaptive task-to-task fusion (AdaTT) and multi-task baselines on a small
numpy autodiff engine."""

__version__ = "0.1.0"
