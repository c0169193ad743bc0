"""Delimiter-separated result files with a commented metadata header."""
from __future__ import annotations

import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

TIMESTAMP_KEY = "created"


def make_header(command: str, config: dict, seed) -> dict:
    return {
        "tool": "csaloha",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        TIMESTAMP_KEY: datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def render_table(rows, columns, header: dict | None = None, sep: str = "\t") -> str:
    lines = []
    for key, value in (header or {}).items():
        text = json.dumps(value, sort_keys=True) if isinstance(value, (dict, list)) else _fmt(value)
        lines.append(f"# {key}: {text}")
    lines.append(sep.join(columns))
    for row in rows:
        lines.append(sep.join(_fmt(row.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def read_table(path, sep: str = "\t"):
    """Parse a file written by :func:`write_table`; returns (header, rows)."""
    header, rows, columns = {}, [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            header[key] = value
        elif columns is None:
            columns = line.split(sep)
        elif line:
            rows.append(dict(zip(columns, line.split(sep))))
    return header, rows


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def strip_timestamp(text: str) -> str:
    """Drop the wall-clock header line (or JSON field) for golden comparisons."""
    out = [ln for ln in text.splitlines() if not ln.startswith(f"# {TIMESTAMP_KEY}:")]
    out = [ln for ln in out if not ln.strip().startswith(f'"{TIMESTAMP_KEY}":')]
    return "\n".join(out)
