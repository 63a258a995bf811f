"""Federated LSTM remaining-useful-life prediction on C-MAPSS turbofan data."""

__version__ = "0.1.0"
