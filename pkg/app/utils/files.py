"""
Artifact files - run directories, CSV tables and JSON documents
"""
import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import aiofiles
import numpy as np
from pydantic import BaseModel
from slugify import slugify

from app.core.config import settings
from app.core.errors import ArtifactError


def run_directory(out_dir: str | Path, name: str) -> Path:
    """Artifact directory for an experiment: <out>/<slug of name>"""
    slug = slugify(name)
    if not slug:
        raise ArtifactError(f"experiment name {name!r} has no usable characters for a directory")
    return Path(out_dir) / slug


# ============== Encoding ==============

def format_float(value: float) -> str:
    return format(float(value), settings.FLOAT_FORMAT)


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if value is None:
        return ""
    return str(value)


def to_jsonable(value: Any) -> Any:
    """Plain JSON tree from pydantic models, numpy arrays and scalars"""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # non-finite numbers are written as strings so the document stays strict JSON
        return value if math.isfinite(value) else str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def dumps_json(data: Any) -> str:
    return json.dumps(to_jsonable(data), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(value) for value in row])
    return buffer.getvalue()


# ============== Writers ==============

async def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    async with aiofiles.open(path, "w", encoding="utf-8", newline="") as f:
        await f.write(text)
    return path


async def write_json(path: Path, data: Any) -> Path:
    return await write_text(path, dumps_json(data))


async def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    return await write_text(path, dumps_csv(header, rows))


# ============== Readers ==============

def read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path} is not valid JSON: {exc}") from exc


def read_csv(path: Path) -> list[list[str]]:
    try:
        with path.open(encoding="utf-8", newline="") as f:
            return [row for row in csv.reader(f)]
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc.strerror}") from exc


def parse_number(text: str) -> Optional[float]:
    """Float value of a CSV cell, None for non-numeric text"""
    try:
        return float(text)
    except ValueError:
        return None
