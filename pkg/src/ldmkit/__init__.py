"""Latent distance models for unsigned, signed and single-event networks."""

__version__ = "0.1.0"
