"""Predictor-corrector skipping of linear-system solves in time-stepping simulations,
with classically emulated quantum read-out tests."""

__version__ = "0.1.0"
