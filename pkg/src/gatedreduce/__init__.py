"""Joint feature representation and reduction with a policy-gradient actor over a skip-gated LSTM."""

__version__ = "0.1.0"
