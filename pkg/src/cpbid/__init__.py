"""Conformal PV forecasting and stochastic day-ahead quantity bidding."""

__version__ = "0.1.0"
