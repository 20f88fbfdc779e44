"""Decorators mapping simulator exceptions to CLI exit codes"""

from functools import wraps

from loguru import logger

from utils.errors import ConfigError, DatasetError, MaskBudgetError, SimulatorError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_DIVERGED = 4
EXIT_MASK_BUDGET = 5


def exit_on_error(f):
    """Decorator turning a command handler's exceptions into its exit code"""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ConfigError as e:
            logger.error(f"[CONFIG] ❌ {e}")
            return EXIT_CONFIG
        except DatasetError as e:
            logger.error(f"[DATA] ❌ {e}")
            return EXIT_DATASET
        except MaskBudgetError as e:
            logger.error(f"[MASK] ❌ {e}")
            return EXIT_MASK_BUDGET
        except SimulatorError as e:
            logger.error(f"[RUN] ❌ {e}")
            return EXIT_ERROR
        except OSError as e:
            logger.error(f"[RUN] ❌ {e}")
            return EXIT_ERROR
    return decorated_function
