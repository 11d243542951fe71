"""Evaluation toolkit for speaker anonymization of pathological speech."""

__version__ = "0.1.0"
