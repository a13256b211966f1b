#!/usr/bin/env python3
"""
File helpers: atomic writes, content hashes and the small CSV artifacts the
pipeline exchanges (scores, labels, loss history)

Every text artifact starts with '# ' comment lines echoing the configuration
that produced it; readers skip comment lines.
"""

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from utils.errors import DataFormatError

PathLike = Union[str, Path]


def format_value(x: float) -> str:
    """Shortest decimal that round-trips to the same float"""
    return repr(float(x))


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write to a temporary sibling, then rename over the target"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def echo_lines(echo: Optional[Dict[str, Any]]) -> List[str]:
    """Render a parameter echo as '# key: value' comment lines"""
    if not echo:
        return []
    lines = []
    for key in sorted(echo):
        value = echo[key]
        if not isinstance(value, str):
            value = json.dumps(value, sort_keys=True, separators=(",", ":"))
        lines.append(f"# {key}: {value}")
    return lines


def render_table(header: Sequence[str], rows: Iterable[Sequence[Any]], echo: Optional[Dict[str, Any]] = None,
                 trailer: Sequence[str] = ()) -> str:
    lines = echo_lines(echo)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_value(v) if isinstance(v, float) else str(v) for v in row))
    lines.extend(trailer)
    return "\n".join(lines) + "\n"


def write_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]],
                echo: Optional[Dict[str, Any]] = None, trailer: Sequence[str] = ()) -> Path:
    return atomic_write_text(path, render_table(header, rows, echo, trailer))


def iter_data_lines(path: PathLike) -> Iterable[Tuple[int, str]]:
    """Non-blank, non-comment lines with their 1-based line numbers"""
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataFormatError(path, f"invalid UTF-8 ({e.reason})", offset=e.start)
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def iter_csv_rows(path: PathLike) -> Iterable[Tuple[int, List[str]]]:
    """CSV cells of every data line, stripped; quoted cells may hold commas"""
    for lineno, line in iter_data_lines(path):
        yield lineno, [c.strip() for c in next(csv.reader([line]))]


def read_id_table(path: PathLike, value_name: str) -> Tuple[List[str], List[str]]:
    """Read an 'id,<value_name>' CSV into parallel id and raw-value lists"""
    ids: List[str] = []
    values: List[str] = []
    header_seen = False
    seen = set()
    for lineno, cells in iter_csv_rows(path):
        if not header_seen:
            if cells != ["id", value_name]:
                raise DataFormatError(path, f"expected header 'id,{value_name}', got {','.join(cells)!r}",
                                      line=lineno)
            header_seen = True
            continue
        if len(cells) != 2:
            raise DataFormatError(path, f"expected 2 cells, got {len(cells)}", line=lineno)
        if cells[0] in seen:
            raise DataFormatError(path, f"duplicate id {cells[0]!r}", line=lineno)
        seen.add(cells[0])
        ids.append(cells[0])
        values.append(cells[1])
    if not header_seen:
        raise DataFormatError(path, f"missing header 'id,{value_name}'")
    return ids, values


def read_scores(path: PathLike) -> Tuple[List[str], List[float]]:
    ids, raw = read_id_table(path, "score")
    scores = []
    for i, value in zip(ids, raw):
        try:
            scores.append(float(value))
        except ValueError:
            raise DataFormatError(path, f"score for id {i!r} is not numeric: {value!r}")
    return ids, scores


def read_labels(path: PathLike) -> Tuple[List[str], List[int]]:
    ids, raw = read_id_table(path, "label")
    labels = []
    for i, value in zip(ids, raw):
        if value not in ("0", "1"):
            raise DataFormatError(path, f"label for id {i!r} must be 0 or 1, got {value!r}")
        labels.append(int(value))
    return ids, labels


def write_scores(path: PathLike, ids: Sequence[str], scores: Sequence[float],
                 echo: Optional[Dict[str, Any]] = None) -> Path:
    return write_table(path, ["id", "score"], ((i, float(s)) for i, s in zip(ids, scores)), echo)


def write_labels(path: PathLike, ids: Sequence[str], labels: Sequence[int],
                 echo: Optional[Dict[str, Any]] = None) -> Path:
    return write_table(path, ["id", "label"], ((i, int(l)) for i, l in zip(ids, labels)), echo)


def write_features(path: PathLike, matrix, echo: Optional[Dict[str, Any]] = None, prefix: str = "f") -> Path:
    """Feature CSV with a '<prefix>0,<prefix>1,...' header that load_csv_features skips"""
    rows = [[float(v) for v in row] for row in matrix]
    width = len(rows[0]) if rows else 0
    return write_table(path, [f"{prefix}{i}" for i in range(width)], rows, echo)
