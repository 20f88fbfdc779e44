"""Services package"""

from services.config_service import ConfigService
from services.prune_service import PruneService

__all__ = ["ConfigService", "PruneService"]
