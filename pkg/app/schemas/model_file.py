"""
Model file schema - TOML POMDP declarations with line-precise validation
"""
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from app.core.errors import ModelFileError
from app.models.pomdp import PomdpSpec, stochastic_row_problems


class ModelFile(BaseModel):
    """
    transition[x][u] is the row T(.|x, u), observation[x] the row O(.|x),
    cost[x][u] = c(x, u).
    """
    model_config = ConfigDict(extra="forbid")

    name: str = Field("pomdp", min_length=1)
    num_states: int = Field(..., gt=0)
    num_obs: int = Field(..., gt=0)
    num_actions: int = Field(..., gt=0)
    memory_n: int = Field(0, ge=0)
    transition: list[list[list[float]]]
    observation: list[list[float]]
    cost: list[list[float]]
    prior: list[float]
    observation_points: Optional[list[list[float]]] = None
    alpha_y: Optional[float] = Field(None, ge=0)


@dataclass(frozen=True)
class LoadedModel:
    spec: PomdpSpec
    memory_n: int
    observation_points: Optional[np.ndarray] = None
    alpha_y: Optional[float] = None
    path: Optional[str] = None


# ============== Line lookup ==============

def _key_line(text: str, key: str) -> Optional[int]:
    match = re.search(rf"^\s*{re.escape(key)}\s*=", text, re.M)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _row_line(text: str, key: str, depth: int, row: int) -> Optional[int]:
    """Line of the ``row``-th array opened at nesting ``depth`` inside ``key``"""
    match = re.search(rf"^\s*{re.escape(key)}\s*=", text, re.M)
    if match is None:
        return None
    line = text.count("\n", 0, match.end()) + 1
    level, count, in_comment = 0, -1, False
    for ch in text[match.end():]:
        if ch == "\n":
            line += 1
            in_comment = False
        elif in_comment:
            continue
        elif ch == "#":
            in_comment = True
        elif ch == "[":
            level += 1
            if level == depth:
                count += 1
                if count == row:
                    return line
        elif ch == "]":
            level -= 1
            if level == 0:
                break
    return _key_line(text, key)


def _toml_line(exc: tomllib.TOMLDecodeError) -> Optional[int]:
    lineno = getattr(exc, "lineno", None)
    if lineno is not None:
        return int(lineno)
    match = re.search(r"line (\d+)", str(exc))
    return int(match.group(1)) if match else None


# ============== Loader ==============

def _shape(value) -> Optional[tuple]:
    try:
        return tuple(np.shape(np.array(value, dtype=float)))
    except ValueError:
        return None


def parse_model_file(text: str, path: Optional[str] = None) -> LoadedModel:
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ModelFileError(f"malformed TOML: {exc}", path, _toml_line(exc)) from exc

    try:
        model = ModelFile.model_validate(document)
    except PydanticValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        top = str(first["loc"][0]) if first["loc"] else ""
        raise ModelFileError(f"{field}: {first['msg']}", path, _key_line(text, top)) from exc

    n_states, n_obs, n_actions = model.num_states, model.num_obs, model.num_actions
    shapes = {
        "transition": (_shape(model.transition), (n_states, n_actions, n_states)),
        "observation": (_shape(model.observation), (n_states, n_obs)),
        "cost": (_shape(model.cost), (n_states, n_actions)),
        "prior": (_shape(model.prior), (n_states,)),
    }
    for key, (found, expected) in shapes.items():
        if found != expected:
            described = "a ragged array" if found is None else f"shape {found}"
            raise ModelFileError(
                f"{key} has {described}, expected shape {expected}", path, _key_line(text, key)
            )

    transition = np.array(model.transition, dtype=float)
    observation = np.array(model.observation, dtype=float)
    prior = np.array(model.prior, dtype=float)
    checks = (
        ("transition", transition, 3, lambda index: index[0] * n_actions + index[1]),
        ("observation", observation, 2, lambda index: index[0]),
        ("prior", prior[None, :], 1, lambda index: 0),
    )
    for key, table, depth, flat_row in checks:
        problems = stochastic_row_problems(table)
        if problems:
            index, message = problems[0]
            label = f"{key}{list(index)}" if key != "prior" else key
            raise ModelFileError(f"{label}: {message}", path, _row_line(text, key, depth, flat_row(index)))

    if not np.all(np.isfinite(np.array(model.cost, dtype=float))):
        raise ModelFileError("cost must be finite", path, _key_line(text, "cost"))

    points = None
    if model.observation_points is not None:
        if len(model.observation_points) != n_obs or len({len(p) for p in model.observation_points}) != 1:
            raise ModelFileError(
                f"observation_points needs {n_obs} coordinate vectors of one length",
                path,
                _key_line(text, "observation_points"),
            )
        points = np.array(model.observation_points, dtype=float)

    spec = PomdpSpec(transition, observation, np.array(model.cost, dtype=float), prior, name=model.name)
    return LoadedModel(spec, model.memory_n, points, model.alpha_y, path)


def load_model_file(path: str | Path) -> LoadedModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFileError(f"cannot read model file: {exc.strerror}", str(path)) from exc
    return parse_model_file(text, str(path))
