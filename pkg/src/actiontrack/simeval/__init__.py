"""Synthetic scenarios (the end-to-end oracle) and evaluation metrics."""
