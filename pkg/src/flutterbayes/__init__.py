"""Bayesian flutter-margin toolkit for a pitch-plunge typical section."""

__version__ = "0.1.0"
