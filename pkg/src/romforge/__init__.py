"""Domain-aware reduced order models for parametric advection-diffusion."""

__version__ = "0.1.0"
