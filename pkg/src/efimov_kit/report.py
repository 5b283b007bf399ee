"""
Result persistence: CSV tables with a provenance comment row and JSON summaries.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import polars as pl

PathLike = Union[str, Path]


def write_csv(df: pl.DataFrame, path: PathLike, comment: str) -> Path:
    """Write ``df`` as CSV preceded by a single ``# comment`` line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = df.write_csv()
    path.write_text(f"# {comment}\n{body}", encoding="utf-8")
    return path


def read_csv(
    path: PathLike, schema_overrides: Optional[Dict[str, pl.DataType]] = None
) -> Tuple[str, pl.DataFrame]:
    """Read a file written by :func:`write_csv`; returns (comment, table)."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
    if not first.startswith("# "):
        raise ValueError(f"Missing comment row in {path}")
    df = pl.read_csv(path, comment_prefix="#", schema_overrides=schema_overrides)
    return first[2:], df


def config_comment(config_hash: str) -> str:
    return f"config_hash={config_hash}"


def write_json(summary: Dict[str, object], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
