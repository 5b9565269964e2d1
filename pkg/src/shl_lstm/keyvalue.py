"""``key = value`` text files, used for manifests and run configs."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

from .data_model import ShlError


class KeyValueError(ShlError):
    pass


def parse_key_values(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KeyValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise KeyValueError(f"{source}:{lineno}: empty key")
        if key in out:
            raise KeyValueError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_key_values(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise KeyValueError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_key_values(text, str(path))


def format_key_values(items: Mapping[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())
