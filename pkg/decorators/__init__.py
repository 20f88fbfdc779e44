"""Decorators package"""

from .cli_decorators import (
    EXIT_CONFIG,
    EXIT_DATASET,
    EXIT_DIVERGED,
    EXIT_ERROR,
    EXIT_MASK_BUDGET,
    EXIT_OK,
    exit_on_error,
)

__all__ = [
    'exit_on_error', 'EXIT_OK', 'EXIT_ERROR', 'EXIT_CONFIG',
    'EXIT_DATASET', 'EXIT_DIVERGED', 'EXIT_MASK_BUDGET',
]
