"""
Shared fixtures: the two-state chain, the one-state model and config files
"""
from pathlib import Path

import numpy as np
import pytest

from app.models.features import QuantizerBasis
from app.models.pomdp import FiniteMemoryPolicy, PomdpSpec
from app.services.model import build_joint_chain
from app.services.oracle import build_stationary_mdp, invariant_distribution


ROOT = Path(__file__).resolve().parents[1]
MODELS = ROOT / "experiments" / "models"


def make_chain2() -> PomdpSpec:
    """Action 0 pushes towards state 0, action 1 towards state 1, 0.8 symmetric channel"""
    rows = [[0.9, 0.1], [0.2, 0.8]]
    return PomdpSpec(
        transition=np.array([rows, rows]),
        observation=np.array([[0.8, 0.2], [0.2, 0.8]]),
        cost=np.array([[0.0, 1.0], [1.0, 0.0]]),
        prior=np.array([0.5, 0.5]),
        name="chain2",
    )


def make_one_state(cost: float = 1.0, num_actions: int = 1) -> PomdpSpec:
    return PomdpSpec(
        transition=np.ones((1, num_actions, 1)),
        observation=np.ones((1, 1)),
        cost=np.full((1, num_actions), cost),
        prior=np.ones(1),
        name="one-state",
    )


def toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(toml_value(item) for item in value) + "]"
    return repr(value)


def render_toml(document: dict) -> str:
    """Minimal TOML writer for nested tables of scalars and arrays"""
    scalars, tables = [], []

    def walk(prefix: str, node: dict) -> None:
        lines = [f"{key} = {toml_value(value)}" for key, value in node.items() if not isinstance(value, dict)]
        if prefix:
            tables.append(f"[{prefix}]")
            tables.extend(lines)
        else:
            scalars.extend(lines)
        for key, value in node.items():
            if isinstance(value, dict):
                walk(f"{prefix}.{key}" if prefix else key, value)

    walk("", document)
    return "\n".join(scalars + tables) + "\n"


@pytest.fixture
def chain2() -> PomdpSpec:
    return make_chain2()


@pytest.fixture
def one_state() -> PomdpSpec:
    return make_one_state()


@pytest.fixture
def codec(chain2):
    return chain2.window_codec(1)


@pytest.fixture
def uniform_policy(codec) -> FiniteMemoryPolicy:
    return FiniteMemoryPolicy.uniform(codec.size, 2)


@pytest.fixture
def chain(chain2, uniform_policy) -> np.ndarray:
    return build_joint_chain(chain2, uniform_policy, 1)


@pytest.fixture
def pi_joint(chain) -> np.ndarray:
    return invariant_distribution(chain)


@pytest.fixture
def mdp(chain, pi_joint, chain2):
    return build_stationary_mdp(chain, pi_joint, chain2, beta=0.8)


@pytest.fixture
def quantizer4() -> QuantizerBasis:
    """Bins on (y_t, y_{t-1}); the last action is dropped"""
    return QuantizerBasis.from_bins([0, 0, 1, 1, 2, 2, 3, 3])


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment config into tmp_path; relative model paths resolve to the shipped models"""

    def write(document: dict, filename: str = "experiment.toml") -> Path:
        document = dict(document)
        model = document.get("model", "chain2.toml")
        if not Path(model).is_absolute():
            document["model"] = (MODELS / model).as_posix()
        path = tmp_path / filename
        path.write_text(render_toml(document), encoding="utf-8")
        return path

    return write
