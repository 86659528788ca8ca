"""Desk-scale offline RL lab: state-advantage-weighted QSS learning and baselines."""

from . import baselines, data, envs, harness, nn, saw, tabular

__all__ = ["baselines", "data", "envs", "harness", "nn", "saw", "tabular"]
__version__ = "0.1.0"
