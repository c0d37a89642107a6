"""Config hashing shared by checkpoints, reports and the stage cache."""
import hashlib
import json
from typing import Any

from pydantic import BaseModel

HASH_LENGTH = 16


def _canonical(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def config_hash(*parts: Any) -> str:
    """Hash one or more configs (models, dicts, strings) into a short hex id.

    Args:
        *parts: Objects to hash; order matters

    Returns:
        First 16 hex characters of the SHA-256 over canonical JSON
    """
    payload = json.dumps([_canonical(p) for p in parts], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:HASH_LENGTH]
