"""Latent-strategy spatial choice models for on-the-way outlet choice."""

__version__ = "0.1.0"
