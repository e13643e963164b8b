"""HTTP service wrapping the provisioning pipeline."""

from .app import create_app

__all__ = ["create_app"]
