"""Flat ``key = value`` config files (``#`` starts a comment)."""
from __future__ import annotations

import os
from pathlib import Path

from .errors import ValidationError


def read_kv(path: str | os.PathLike) -> dict[str, str]:
    path = Path(path)
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValidationError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ValidationError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_kv(items: dict[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def write_kv(items: dict[str, object], path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_text(format_kv(items), encoding="utf-8")
    return path
