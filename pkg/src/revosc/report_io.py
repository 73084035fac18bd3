"""Versioned report envelopes for reproducible experiment artifacts.

Every report written by the toolkit is wrapped in an envelope carrying the
schema version, the tool version, a hash of the canonicalized input config,
and a hash of the canonical payload bytes.  Reads verify both the schema
version and the payload hash, so silently edited or truncated artifacts are
rejected.  Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass

SCHEMA_VERSION = 1
SUPPORTED_VERSIONS = (1,)


class ReportError(ValueError):
    """Envelope validation failure (schema, hash, or parse), with context."""


class UnsupportedSchemaError(ReportError):
    pass


def canonical_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class ReportEnvelope:
    payload_kind: str
    payload: dict
    config_sha256: str | None = None
    schema_version: int = SCHEMA_VERSION
    tool_version: str = ""
    created_utc: str = ""

    def __post_init__(self):
        if not self.tool_version:
            from . import __version__
            self.tool_version = __version__
        if not self.created_utc:
            self.created_utc = datetime.datetime.now(datetime.timezone.utc) \
                .isoformat(timespec="seconds")

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "created_utc": self.created_utc,
            "config_sha256": self.config_sha256,
            "payload_kind": self.payload_kind,
            "payload": self.payload,
            "payload_sha256": sha256_hex(canonical_bytes(self.payload)),
        }


def write_report(env: ReportEnvelope, path: str) -> None:
    """Serialize the envelope atomically; round-trips through read_report."""
    data = json.dumps(env.to_dict(), sort_keys=True, indent=2, ensure_ascii=False)
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise ReportError(f"failed writing report to {path}: {exc}") from exc


def read_report(path: str) -> ReportEnvelope:
    """Parse and validate an envelope; raises ReportError with file context."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ReportError(f"{path}: {exc}") from exc
    version = raw.get("schema_version")
    if version not in SUPPORTED_VERSIONS:
        raise UnsupportedSchemaError(
            f"{path}: schema_version {version!r} unsupported (know {SUPPORTED_VERSIONS})"
        )
    expected = raw.get("payload_sha256")
    actual = sha256_hex(canonical_bytes(raw.get("payload", {})))
    if expected != actual:
        raise ReportError(f"{path}: payload hash mismatch (tampered or truncated)")
    return ReportEnvelope(
        payload_kind=raw.get("payload_kind", ""),
        payload=raw["payload"],
        config_sha256=raw.get("config_sha256"),
        schema_version=version,
        tool_version=raw.get("tool_version", ""),
        created_utc=raw.get("created_utc", ""),
    )
