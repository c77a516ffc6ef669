"""Snapshot and restore of the controller state as a deterministic JSON document."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

from ..admission.state import NetworkState
from ..errors import IoError, SchemaMismatch


def snapshot(state: NetworkState, path: str | os.PathLike) -> None:
    """Write ``state`` atomically: readers never observe a half-written file."""
    path = Path(path)
    data = state.dumps() + "\n"
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write snapshot {path}: {exc}") from exc


def restore(path: str | os.PathLike) -> NetworkState:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read snapshot {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise SchemaMismatch(f"snapshot {path} is not UTF-8 text") from exc
    return NetworkState.loads_json(text)
