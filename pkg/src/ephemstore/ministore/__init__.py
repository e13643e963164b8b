"""User-space striped data manager: management, metadata, storage, client."""

from .client import Session
from .striping import StripeMap, chunk_spans

__all__ = ["Session", "StripeMap", "chunk_spans"]
