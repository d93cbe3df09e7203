"""Thin exporter: pretrained speech-model features and speaker embeddings
written as .aaif / .aaix files for the AAI toolkit."""

__version__ = "0.1.0"
