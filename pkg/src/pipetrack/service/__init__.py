from pipetrack.service.app import create_app
from pipetrack.service.config import ServiceConfig, load_config

__all__ = ["create_app", "ServiceConfig", "load_config"]
