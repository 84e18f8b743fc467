"""Online localization service: HTTP API, tracker sessions, persistence."""
from .app import create_app, serve
from .config import ServiceConfig, load_config
from .core import LocalizationService, ServiceError
from .store import AppendLog, ModelRegistry, ModelVersion, ServiceStore

__all__ = ["AppendLog", "LocalizationService", "ModelRegistry", "ModelVersion", "ServiceConfig",
           "ServiceError", "ServiceStore", "create_app", "load_config", "serve"]
