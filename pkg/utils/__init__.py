"""Utilities package"""

from utils.errors import SimulatorError

__all__ = ["SimulatorError"]
