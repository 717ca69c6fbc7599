"""CSV emission and ingestion, and JSON run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.10g"


def emit_csv(columns: Mapping[str, Sequence], path: PathLike) -> Path:
    """Write named columns to ``path`` with a header row.

    Floats are written with 10 significant digits, booleans as true/false,
    integers verbatim.  Line endings are LF and the encoding is UTF-8.
    """
    names = list(columns)
    if not names:
        raise ValueError("no columns to write")
    data = [np.asarray(columns[n]) for n in names]
    lengths = {len(d) for d in data}
    if len(lengths) > 1:
        raise ValueError(f"columns differ in length: {dict(zip(names, map(len, data)))}")
    formatted = []
    for d in data:
        if d.dtype == bool:
            formatted.append(np.where(d, "true", "false"))
        elif np.issubdtype(d.dtype, np.integer):
            formatted.append(d.astype(str))
        else:
            formatted.append(np.char.mod(FLOAT_FORMAT, d.astype(float)))
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        if formatted and len(formatted[0]):
            rows = np.column_stack(formatted)
            fh.write("\n".join(",".join(r) for r in rows))
            fh.write("\n")
    return path


def _convert(values: List[str]):
    if values and all(v in ("true", "false") for v in values):
        return np.array([v == "true" for v in values])
    return np.array([float(v) for v in values])


def read_csv(path: PathLike) -> Dict[str, np.ndarray]:
    """Read a CSV written by :func:`emit_csv` (or any numeric CSV with a header)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        cols: List[List[str]] = [[] for _ in header]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for c, v in zip(cols, row):
                c.append(v.strip())
    try:
        return {h: _convert(c) for h, c in zip(header, cols)}
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric value ({exc})") from None


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    argv: List[str]
    command: str
    config: Dict[str, object]
    seed: int
    version: str
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    outputs: Dict[str, str] = field(default_factory=dict)
    extra: Dict[str, object] = field(default_factory=dict)

    def add_output(self, path: PathLike, base: Optional[Path] = None):
        path = Path(path)
        key = str(path.relative_to(base)) if base is not None else str(path)
        self.outputs[key] = sha256_file(path)

    def write(self, path: PathLike) -> Path:
        self.finished = _now()
        path = Path(path)
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: PathLike) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)

    def verify(self, base: Path) -> Dict[str, bool]:
        """Digest check of every listed output relative to ``base``."""
        result = {}
        for name, digest in self.outputs.items():
            p = base / name
            result[name] = p.exists() and sha256_file(p) == digest
        return result
