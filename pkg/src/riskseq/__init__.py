"""Hybrid CNN/BiLSTM/attention classifier for systemic-risk windows, in plain numpy."""

__version__ = "0.1.0"
