"""Simulation pipeline package: round loop, diagnostics and metric output."""
