"""Functional and timing simulator for a spiking continual-learning accelerator."""

__version__ = "0.1.0"
