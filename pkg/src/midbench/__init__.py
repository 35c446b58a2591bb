"""Desk-scale workbench for locating and mitigating spurious correlations
via mid-range logit analysis and last-layer retraining."""

__version__ = "0.1.0"
