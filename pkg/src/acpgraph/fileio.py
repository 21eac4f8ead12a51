"""Atomic file output and access to the bundled fixtures."""
from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

__all__ = ["atomic_write", "data_path", "read_text"]


def atomic_write(path: str | os.PathLike, data: str | bytes) -> None:
    """Write through a temporary sibling file and rename it into place (parents are created)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        if isinstance(data, bytes):
            tmp.write_bytes(data)
        else:
            with open(tmp, "w", encoding="utf-8", newline="") as fh:
                fh.write(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def read_text(path: str | os.PathLike) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def data_path(name: str) -> Path:
    """Path of a fixture shipped in ``acpgraph/data``."""
    p = resources.files("acpgraph") / "data" / name
    if not p.is_file():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return Path(str(p))
