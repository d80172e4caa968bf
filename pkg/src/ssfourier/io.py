"""System files, deterministic CSV/JSON emission and the content-addressed result cache."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .ifs import IfsSystem, build_system

CACHE_ENV = "SSFOURIER_CACHE_DIR"


def _exact_number(x) -> float:
    """Parse a JSON number or a "p/q" string, rounding the exact rational once."""
    if isinstance(x, bool):
        raise ValidationError(f"expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    try:
        return float(Fraction(str(x).strip()))
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"not a number: {x!r}") from None


def parse_system(obj: Mapping) -> IfsSystem:
    if not isinstance(obj, Mapping) or "maps" not in obj or "probs" not in obj:
        raise ValidationError('system must be an object with "maps" and "probs"')
    maps = obj["maps"]
    if not isinstance(maps, list) or any(not isinstance(m, list) or len(m) != 2 for m in maps):
        raise ValidationError('"maps" must be a list of [a, b] pairs')
    probs = obj["probs"]
    if not isinstance(probs, list):
        raise ValidationError('"probs" must be a list')
    return build_system([(_exact_number(a), _exact_number(b)) for a, b in maps],
                        [_exact_number(p) for p in probs])


def load_system(path) -> IfsSystem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read system file {path}: {exc}") from None
    try:
        # keep decimal literals as text so they are rounded exactly once
        obj = json.loads(text, parse_float=str)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed system JSON in {path}: {exc}") from None
    return parse_system(obj)


def format_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x + 0.0, ".17g")
    if hasattr(x, "__float__") and not isinstance(x, str):
        return format_value(float(x))
    return str(x)


def csv_text(records: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    records = list(records)
    if columns is None:
        if not records:
            raise ValidationError("columns are required for an empty record list")
        columns = list(records[0])
    for r in records:
        if list(r) != list(columns):
            raise ValidationError("records must all have the same fields")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow([format_value(r[c]) for c in columns])
    return buf.getvalue()


def emit_csv(records: Iterable[Mapping], path, columns: Sequence[str] | None = None) -> None:
    """Header plus one row per record, 17 significant digits, LF line endings."""
    text = csv_text(list(records), columns)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from None


def json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class ResultCache:
    """Artifacts stored under sha256(canonical config + package version).

    The config is stored next to the artifact; a stored config that does not
    match is treated as a miss.
    """

    def __init__(self, root, version: str):
        self.root = Path(root)
        self.version = version

    def key(self, config: Mapping) -> str:
        return hashlib.sha256((canonical_json(config) + "\0" + self.version).encode()).hexdigest()

    def _paths(self, key: str):
        return self.root / f"{key}.artifact", self.root / f"{key}.meta.json"

    def get(self, config: Mapping):
        art, meta = self._paths(self.key(config))
        if not art.exists() or not meta.exists():
            return None
        try:
            stored = json.loads(meta.read_text())
        except (OSError, json.JSONDecodeError):
            return None
        if stored.get("config") != json.loads(canonical_json(config)) or stored.get("version") != self.version:
            return None
        return art.read_bytes(), stored.get("summary", ""), stored.get("exit", 0)

    def put(self, config: Mapping, data: bytes, summary: str, exit_code: int = 0) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        art, meta = self._paths(self.key(config))
        tmp = art.with_suffix(f".tmp{os.getpid()}")
        tmp.write_bytes(data)
        tmp.replace(art)
        meta.write_text(json_text({"config": json.loads(canonical_json(config)),
                                   "version": self.version, "summary": summary,
                                   "exit": exit_code}))
