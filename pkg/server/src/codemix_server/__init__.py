"""Model server speaking the codemix wire protocol."""

from .app import ServerConfig, create_app
from .models import ModelError

__all__ = ["ServerConfig", "create_app", "ModelError"]
