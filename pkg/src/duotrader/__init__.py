"""Dual-model alpha engine: regime HMM + trend network consensus signals,
Black-Litterman allocation, per-security risk overlays, and a deterministic
event-driven daily backtester."""

__version__ = "0.1.0"
