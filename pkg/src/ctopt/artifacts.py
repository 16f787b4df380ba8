"""JSON artifact persistence with embedded content hashes."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any


class ArtifactError(ValueError):
    """Corrupt, mismatched or stale artifact file."""


def content_hash(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save(path: str | Path, kind: str, payload: dict, upstream: dict[str, str] | None = None) -> str:
    """Write ``payload`` wrapped with its hash; returns the hash."""
    digest = content_hash(payload)
    doc = {"kind": kind, "hash": digest, "upstream": upstream or {}, "payload": payload}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))
    return digest


def load(path: str | Path, kind: str) -> tuple[dict, str, dict[str, str]]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"{path}: unreadable artifact ({exc})") from None
    if not isinstance(doc, dict) or doc.get("kind") != kind:
        raise ArtifactError(f"{path}: expected a {kind!r} artifact, found {doc.get('kind') if isinstance(doc, dict) else type(doc).__name__!r}")
    payload = doc.get("payload")
    if content_hash(payload) != doc.get("hash"):
        raise ArtifactError(f"{path}: integrity check failed (content hash mismatch)")
    return payload, doc["hash"], doc.get("upstream", {})
