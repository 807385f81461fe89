"""
Belief grid solver - optimal POMDP values on a triangulated belief simplex
"""
import logging
from itertools import combinations_with_replacement
from math import comb
from typing import Optional

import numpy as np
from scipy import sparse

from app.core.config import settings
from app.core.errors import EnumerationBudgetError, ValidationError
from app.models.pomdp import PomdpSpec


logger = logging.getLogger(__name__)


def grid_size(resolution: int, num_states: int) -> int:
    return comb(resolution + num_states - 1, num_states - 1)


def fitting_resolution(num_states: int, resolution: int, budget: int) -> int:
    """Largest M <= resolution whose grid has at most ``budget`` points"""
    while resolution > 1 and grid_size(resolution, num_states) > budget:
        resolution -= 1
    if grid_size(resolution, num_states) > budget:
        raise EnumerationBudgetError("belief grid", grid_size(resolution, num_states), budget)
    return resolution


class BeliefGridSolver:
    """
    Value iteration for the belief MDP on the grid {k / M : k in N^|X|, sum k = M}.

    Beliefs off the grid are interpolated over the Freudenthal simplex that
    contains them; interpolation weights are convex, so the grid Bellman
    operator is a sup-norm contraction. Grid points are addressed by their
    tail sums x_i = k_i + ... + k_|X| (i >= 2), a non-increasing vector in [0, M].

    Without an explicit ``resolution`` the configured one is lowered until the
    grid fits ``BELIEF_GRID_BUDGET``; an explicit resolution over budget is an error.
    """

    def __init__(self, spec: PomdpSpec, beta: float, resolution: Optional[int] = None):
        if not 0.0 < beta < 1.0:
            raise ValidationError(f"discount beta must lie in (0, 1), got {beta}")
        self.spec = spec
        self.beta = beta
        n = spec.num_states
        budget = settings.BELIEF_GRID_BUDGET
        if resolution is None:
            requested = settings.BELIEF_GRID_RESOLUTION
            self.resolution = fitting_resolution(n, requested, budget)
            if self.resolution < requested:
                logger.warning(
                    "belief grid for %d states lowered from M=%d to M=%d to fit %d points",
                    n, requested, self.resolution, budget,
                )
        else:
            self.resolution = int(resolution)
            if self.resolution < 1:
                raise ValidationError(f"grid resolution must be positive, got {self.resolution}")
            if grid_size(self.resolution, n) > budget:
                raise EnumerationBudgetError("belief grid", grid_size(self.resolution, n), budget)

        m = self.resolution
        if (m + 1) ** max(n - 1, 0) >= 2**62:
            raise ValidationError(f"belief grid keys overflow for |X|={n}, M={m}")
        if n == 1:
            tails = np.zeros((1, 0), dtype=np.int64)
        else:
            # tail sums, non-increasing; combinations come out non-decreasing
            tails = np.array(list(combinations_with_replacement(range(m + 1), n - 1)), dtype=np.int64)[:, ::-1]
        edges = np.hstack([np.full((tails.shape[0], 1), m), tails, np.zeros((tails.shape[0], 1), np.int64)])
        self.points = edges[:, :-1] - edges[:, 1:]
        self._radix = (m + 1) ** np.arange(n - 1, dtype=np.int64)
        keys = tails @ self._radix
        self._order = np.argsort(keys, kind="stable")
        self._keys = keys[self._order]
        self.values: Optional[np.ndarray] = None
        self.iterations = 0

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def interpolation_error(self) -> float:
        """Certified gap between grid values and J*: 2 |X| ||c|| / (M (1 - beta)^2)"""
        return 2.0 * self.spec.num_states * self.spec.cost_sup / (self.resolution * (1.0 - self.beta) ** 2)

    def locate(self, beliefs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Grid indices and convex weights of each belief row, both of shape (rows, |X|)"""
        beliefs = np.clip(np.atleast_2d(np.asarray(beliefs, dtype=float)), 0.0, None)
        beliefs = beliefs / beliefs.sum(axis=1, keepdims=True)
        rows, n = beliefs.shape
        m = self.resolution
        if n == 1:
            return np.zeros((rows, 1), dtype=np.int64), np.ones((rows, 1))

        tails = np.clip(m * np.cumsum(beliefs[:, ::-1], axis=1)[:, ::-1][:, 1:], 0.0, m)
        base = np.floor(tails + 1e-12).astype(np.int64)
        frac = np.clip(tails - base, 0.0, 1.0)
        order = np.argsort(-frac, axis=1, kind="stable")
        ranked = np.take_along_axis(frac, order, axis=1)
        padded = np.hstack([np.ones((rows, 1)), ranked, np.zeros((rows, 1))])
        weights = padded[:, :-1] - padded[:, 1:]

        steps = np.zeros((rows, n - 1, n - 1), dtype=np.int64)
        np.put_along_axis(steps, order[:, :, None], 1, axis=2)
        offsets = np.concatenate([np.zeros((rows, 1, n - 1), np.int64), np.cumsum(steps, axis=1)], axis=1)
        keys = (base[:, None, :] + offsets) @ self._radix

        # vertices leaving the simplex only ever carry zero weight
        pos = np.minimum(np.searchsorted(self._keys, keys), self.size - 1)
        found = self._keys[pos] == keys
        return np.where(found, self._order[pos], 0), np.where(found, weights, 0.0)

    def interpolate_weights(self, belief: np.ndarray) -> list[tuple[int, float]]:
        """(grid index, weight) pairs with sum of weights one"""
        indices, weights = self.locate(belief)
        return [(int(i), float(w)) for i, w in zip(indices[0], weights[0]) if w > 0.0]

    def _operators(self) -> tuple[np.ndarray, list[sparse.csr_matrix]]:
        spec = self.spec
        n = spec.num_states
        beliefs = self.points / self.resolution
        costs = beliefs @ spec.cost
        operators = []
        for u in range(spec.num_actions):
            rows, cols, data = [], [], []
            predicted = beliefs @ spec.transition[:, u, :]
            for y in range(spec.num_obs):
                joint = predicted * spec.observation[:, y]
                p_y = joint.sum(axis=1)
                live = np.flatnonzero(p_y > 0.0)
                indices, weights = self.locate(joint[live] / p_y[live, None])
                rows.append(np.repeat(live, n))
                cols.append(indices.reshape(-1))
                data.append((p_y[live, None] * weights).reshape(-1))
            matrix = sparse.csr_matrix(
                (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.size, self.size),
            )
            matrix.eliminate_zeros()
            operators.append(matrix)
        return costs, operators

    def solve(self, tol: Optional[float] = None) -> np.ndarray:
        """Grid values V with V = min_u (c_u + beta P_u V)"""
        tol = settings.VALUE_ITERATION_TOL if tol is None else tol
        costs, operators = self._operators()
        values = np.zeros(self.size)
        factor = self.beta / (1.0 - self.beta)
        for iteration in range(1, settings.VALUE_ITERATION_CAP + 1):
            candidates = np.stack([costs[:, u] + self.beta * (operators[u] @ values) for u in range(len(operators))])
            nxt = candidates.min(axis=0)
            residual = float(np.abs(nxt - values).max())
            values = nxt
            if factor * residual < tol:
                break
        self.values = values
        self.iterations = iteration
        logger.info(
            "belief grid solved: %d points, %d iterations, interpolation error %.3g",
            self.size, iteration, self.interpolation_error,
        )
        return values

    def value(self, belief: np.ndarray) -> float:
        """Interpolated optimal value at ``belief``"""
        if self.values is None:
            self.solve()
        indices, weights = self.locate(belief)
        return float(weights[0] @ self.values[indices[0]])
