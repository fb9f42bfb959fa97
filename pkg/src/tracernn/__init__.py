"""Recurrent (GRU/LSTM) classifiers for business-process traces."""
__version__ = "0.1.0"
