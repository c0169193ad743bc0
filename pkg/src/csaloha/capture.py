"""Capture tables p(s|t_A), the c/u split and the chain capture probability C(t)."""
from __future__ import annotations

import hashlib
from math import comb
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TABLE_FORMAT_VERSION = 1
ROW_SUM_TOL = 1e-9
SOURCES = ("monte-carlo", "synthetic-collision", "synthetic-perfect", "synthetic-singleton", "file")


class TableFormatError(ValueError):
    """Raised when a capture-table file or matrix is malformed."""


@dataclass(frozen=True)
class CaptureTable:
    """Per-slot capture probabilities.

    ``p[t_A, s]`` is the probability that one detection pass on a slot with
    ``t_A`` active users recovers exactly ``s`` of them. Row 0 is unused and
    kept all-zero so rows can be indexed by ``t_A`` directly.
    """

    p: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] < 2:
            raise TableFormatError(f"capture matrix must be square with t_max >= 1, got shape {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise TableFormatError("capture probabilities must lie in [0, 1]")
        if np.any(p[0] != 0):
            raise TableFormatError("row t_A = 0 must be empty")
        if np.any(np.triu(p, 1) != 0):
            raise TableFormatError("p[t_A, s] must vanish for s > t_A")
        sums = p[1:].sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
        if bad.size:
            t_a = int(bad[0]) + 1
            raise TableFormatError(f"row t_A={t_a} sums to {sums[bad[0]]!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def t_max(self) -> int:
        return self.p.shape[0] - 1

    @classmethod
    def from_rows(cls, rows, meta=None) -> "CaptureTable":
        """Build from rows ``rows[t_A - 1] = [p(0|t_A), ..., p(t_A|t_A)]``.

        A row may omit the ``s = 0`` entry by giving a mapping ``{s: prob}`` for
        ``s >= 1``; the deficit is then assigned to ``s = 0``.
        """
        t_max = len(rows)
        p = np.zeros((t_max + 1, t_max + 1))
        for t_a, row in enumerate(rows, start=1):
            if isinstance(row, dict):
                for s, v in row.items():
                    if not 0 <= s <= t_a:
                        raise TableFormatError(f"s={s} out of range for t_A={t_a}")
                    p[t_a, s] = v
                if 0 not in row:
                    p[t_a, 0] = max(0.0, 1.0 - p[t_a, 1:].sum())
            else:
                row = np.asarray(row, dtype=float)
                if row.shape != (t_a + 1,):
                    raise TableFormatError(f"row t_A={t_a} must have {t_a + 1} entries, got {row.size}")
                p[t_a, : t_a + 1] = row
        return cls(p, dict(meta or {}))

    def rows(self) -> list[list[float]]:
        return [self.p[t_a, : t_a + 1].tolist() for t_a in range(1, self.t_max + 1)]

    def truncated(self, t_max: int) -> "CaptureTable":
        if not 1 <= t_max <= self.t_max:
            raise ValueError(f"cannot truncate a t_max={self.t_max} table to {t_max}")
        return CaptureTable(self.p[: t_max + 1, : t_max + 1], dict(self.meta))


@dataclass(frozen=True)
class CaptureSplit:
    """c[t_A, s]: referent user among the s recovered; u = p - c: referent not recovered."""

    c: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class CaptureVector:
    """C[t]: probability the referent edge is recovered with t unrecovered interferers."""

    C: np.ndarray

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        if C.ndim != 1 or C.size == 0:
            raise ValueError("capture vector must be a non-empty 1-D array")
        if np.any(C < 0) or np.any(C > 1):
            raise ValueError("capture probabilities must lie in [0, 1]")
        C.setflags(write=False)
        object.__setattr__(self, "C", C)

    @property
    def t_max(self) -> int:
        return self.C.size

    def __call__(self, t: int) -> float:
        return float(self.C[t]) if 0 <= t < self.C.size else 0.0


def split(table: CaptureTable) -> CaptureSplit:
    # binom(t_A-1, s-1) / binom(t_A, s) reduces to s / t_A
    t_a = np.arange(table.t_max + 1, dtype=float)
    s = np.arange(table.t_max + 1, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(t_a[:, None] > 0, s[None, :] / t_a[:, None], 0.0)
    c = ratio * table.p
    c[:, 0] = 0.0
    # entrywise; u(0|t_A) = p(0|t_A) is never used by the chain sum, which starts at s = 1
    return CaptureSplit(c, table.p - c)


def chain_capture(table: CaptureTable) -> CaptureVector:
    """C(t) for t = 0 .. t_max - 1 via the residual-count recursion.

    R(m) = sum_{s=1..m} c(s|m) + u(s|m) R(m - s), R(0) = 0, and C(t) = R(t + 1).
    """
    sp = split(table)
    R = np.zeros(table.t_max + 1)
    for m in range(1, table.t_max + 1):
        s = np.arange(1, m + 1)
        R[m] = sp.c[m, 1 : m + 1].sum() + np.dot(sp.u[m, 1 : m + 1], R[m - s])
    return CaptureVector(np.clip(R[1:], 0.0, 1.0))


def chain_capture_bruteforce(table: CaptureTable, t: int) -> float:
    """Literal chain sum: enumerate every sequence (s_1, ..., s_q) for one t.

    Earlier steps recover users other than the referent, the last step
    recovers the referent. Exponential in t; intended as a test oracle.
    """
    t_a = t + 1
    p = table.p

    def c(s, n):
        return comb(n - 1, s - 1) / comb(n, s) * p[n, s]

    def u(s, n):
        return p[n, s] - c(s, n)

    def compositions(total):
        # ordered sequences of positive integers whose sum is at most total
        yield ()
        for first in range(1, total + 1):
            for rest in compositions(total - first):
                yield (first,) + rest

    result = 0.0
    for steps in compositions(t_a):
        if not steps:
            continue
        left = t_a
        term = 1.0
        for s in steps[:-1]:
            term *= u(s, left)
            left -= s
        if steps[-1] > left:
            continue
        result += term * c(steps[-1], left)
    return result


def synthetic_table(kind: str, t_max: int, p1: float | None = None) -> CaptureTable:
    """Fixture tables: ``collision``, ``perfect-mud`` or ``singleton-prob`` (needs p1)."""
    if t_max < 1:
        raise ValueError(f"t_max must be >= 1, got {t_max}")
    p = np.zeros((t_max + 1, t_max + 1))
    if kind == "collision":
        p[1, 1] = 1.0
        p[2:, 0] = 1.0
        source = "synthetic-collision"
    elif kind == "perfect-mud":
        idx = np.arange(1, t_max + 1)
        p[idx, idx] = 1.0
        source = "synthetic-perfect"
    elif kind == "singleton-prob":
        if p1 is None or not 0 <= p1 <= 1:
            raise ValueError(f"singleton-prob needs p1 in [0, 1], got {p1}")
        p[1, 1] = p1
        p[1, 0] = 1.0 - p1
        p[2:, 0] = 1.0
        source = "synthetic-singleton"
    else:
        raise ValueError(f"unknown synthetic table kind {kind!r}")
    meta = {"source": source}
    if p1 is not None:
        meta["p1"] = p1
    return CaptureTable(p, meta)


def zero_capture_table(t_max: int) -> CaptureTable:
    p = np.zeros((t_max + 1, t_max + 1))
    p[1:, 0] = 1.0
    return CaptureTable(p, {"source": "synthetic-zero"})


def table_digest(table: CaptureTable) -> str:
    return hashlib.sha256(np.ascontiguousarray(table.p).tobytes()).hexdigest()[:16]


# -- file format ---------------------------------------------------------

_META_KEYS = ("snr_db", "source", "T_sim", "seed", "phy_hash")


def table_to_dict(table: CaptureTable) -> dict:
    meta = dict(table.meta)
    doc = {"version": TABLE_FORMAT_VERSION, "t_max": table.t_max}
    for key in _META_KEYS:
        doc[key] = meta.pop(key, None)
    if doc["source"] is None:
        doc["source"] = "file"
    doc["rows"] = [{"t_A": t_a, "probs": row} for t_a, row in enumerate(table.rows(), start=1)]
    if meta:
        doc["extra"] = meta
    return doc


def table_from_dict(doc: dict) -> CaptureTable:
    if not isinstance(doc, dict):
        raise TableFormatError("capture-table document must be a mapping")
    missing = [k for k in ("version", "t_max", "rows") if k not in doc]
    if missing:
        raise TableFormatError(f"capture-table file lacks field(s): {', '.join(missing)}")
    if doc["version"] != TABLE_FORMAT_VERSION:
        raise TableFormatError(f"unsupported capture-table version {doc['version']!r}")
    t_max = doc["t_max"]
    rows = doc["rows"]
    if not isinstance(t_max, int) or t_max < 1:
        raise TableFormatError(f"t_max must be a positive integer, got {t_max!r}")
    if not isinstance(rows, list) or len(rows) != t_max:
        raise TableFormatError(f"t_max={t_max} but file has {len(rows) if isinstance(rows, list) else '?'} rows")
    ordered = []
    for i, row in enumerate(rows, start=1):
        try:
            t_a, probs = row["t_A"], row["probs"]
        except (TypeError, KeyError):
            raise TableFormatError(f"row {i} must carry 't_A' and 'probs'") from None
        if t_a != i:
            raise TableFormatError(f"row {i} is labelled t_A={t_a!r}; rows must be ordered 1..t_max")
        if not isinstance(probs, list) or not all(isinstance(v, (int, float)) for v in probs):
            raise TableFormatError(f"row t_A={t_a} probabilities must be a list of numbers")
        ordered.append(probs)
    meta = {k: doc.get(k) for k in _META_KEYS if doc.get(k) is not None}
    meta.update(doc.get("extra", {}))
    return CaptureTable.from_rows(ordered, meta)


def save_table(table: CaptureTable, path, header: dict | None = None) -> None:
    doc = table_to_dict(table)
    if header:
        doc = {"header": header, **doc}
    # json writes floats via repr, which round-trips exactly
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_table(path) -> CaptureTable:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TableFormatError(f"{path}: not a valid capture-table file ({exc})") from None
    try:
        return table_from_dict(doc)
    except TableFormatError as exc:
        raise TableFormatError(f"{path}: {exc}") from None
