"""
Feature service - L2(pi) projection, Gram matrices, covariance dominance
"""
import logging
from itertools import product
from typing import Iterable, Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from app.core.config import settings
from app.core.errors import RankDeficiencyError, ValidationError
from app.core.rng import make_rng
from app.models.features import FeatureBasis, GramMatrix, ParameterVector, QuantizerBasis
from app.models.oracle import ValueTable
from app.schemas.reports import DominanceReport


logger = logging.getLogger(__name__)

Function = Union[ValueTable, np.ndarray]


def _flat(values: Function) -> np.ndarray:
    if isinstance(values, ValueTable):
        values = values.values
    return np.asarray(values, dtype=float).reshape(-1)


# ============== Norms ==============

def l2_norm(f: Function, pi: np.ndarray) -> float:
    """||f||_{2, pi}"""
    return float(np.sqrt(np.sum(_flat(pi) * _flat(f) ** 2)))


def sup_norm(f: Function) -> float:
    return float(np.abs(_flat(f)).max())


# ============== Projection ==============

def _weighted_gram(basis: FeatureBasis, pi: np.ndarray) -> np.ndarray:
    weights = _flat(pi)
    if weights.size != basis.matrix.shape[0]:
        raise ValidationError(f"{weights.size} weights for a basis over {basis.matrix.shape[0]} points")
    gram = basis.matrix.T @ (weights[:, None] * basis.matrix)
    return 0.5 * (gram + gram.T)


def _factor(gram: np.ndarray):
    sigma_min = float(np.linalg.eigvalsh(gram)[0])
    if sigma_min <= settings.SINGULAR_TOL:
        raise RankDeficiencyError(sigma_min)
    return cho_factor(gram)


def project(f: Function, pi: np.ndarray, basis: FeatureBasis) -> ParameterVector:
    """theta_f = Sigma^{-1} E_pi[Phi f], the L2(pi) projection coefficients"""
    values = _flat(f)
    if values.size != basis.matrix.shape[0]:
        raise ValidationError(f"function has {values.size} entries, basis covers {basis.matrix.shape[0]} points")
    factor = _factor(_weighted_gram(basis, pi))
    return cho_solve(factor, basis.matrix.T @ (_flat(pi) * values))


def projection_matrix(basis: FeatureBasis, pi: np.ndarray) -> np.ndarray:
    """Matrix M with (Pi f) = M f on the tabulated points"""
    factor = _factor(_weighted_gram(basis, pi))
    return basis.matrix @ cho_solve(factor, basis.matrix.T * _flat(pi)[None, :])


def bin_masses(quantizer: QuantizerBasis, pi: np.ndarray) -> np.ndarray:
    """pi(A_i) for every bin"""
    return quantizer.matrix.T @ _flat(pi)


# ============== Gram matrices ==============

def gram_exploration(basis: FeatureBasis, pi: np.ndarray) -> GramMatrix:
    """Sigma_gamma = sum pi(s, u) Phi(s, u) Phi(s, u)^T"""
    return GramMatrix(_weighted_gram(basis, pi), provenance="exploration")


def greedy_actions(basis_sa: FeatureBasis, theta: ParameterVector) -> np.ndarray:
    """gamma_theta(s) = argmin_u theta^T Phi(s, u), lowest index on ties"""
    return np.argmin(basis_sa.values(theta), axis=1)


def gram_for_actions(basis_sa: FeatureBasis, actions: np.ndarray, pi_state: np.ndarray) -> GramMatrix:
    chosen = basis_sa.by_state_action[np.arange(basis_sa.num_states), np.asarray(actions)]
    gram = chosen.T @ (np.asarray(pi_state, float)[:, None] * chosen)
    return GramMatrix(0.5 * (gram + gram.T), provenance="greedy")


def gram_greedy(basis_sa: FeatureBasis, theta: ParameterVector, pi_state: np.ndarray) -> GramMatrix:
    """Sigma_theta under the greedy map of theta"""
    return gram_for_actions(basis_sa, greedy_actions(basis_sa, theta), pi_state)


# ============== Dominance ==============

def _batched_margins(sigma_gamma: np.ndarray, chosen: np.ndarray, pi_state: np.ndarray, beta: float) -> np.ndarray:
    """chosen: (B, S, d) features under B greedy maps"""
    sigma_theta = np.einsum("bsd,s,bse->bde", chosen, pi_state, chosen)
    return np.linalg.eigvalsh(sigma_gamma[None, :, :] - beta**2 * sigma_theta)[:, 0]


def _candidate_maps(basis_sa: FeatureBasis, thetas: Optional[Iterable], seed: int) -> tuple[Iterable, int, str]:
    n_states, n_actions = basis_sa.num_states, basis_sa.num_actions

    if thetas is not None:
        maps = {tuple(greedy_actions(basis_sa, theta).tolist()) for theta in thetas}
        return sorted(maps), len(maps), "supplied-thetas"

    if isinstance(basis_sa, QuantizerBasis) and basis_sa.action_bins is not None:
        n_bins, n_abins = basis_sa.num_state_bins, basis_sa.num_action_bins
        count = n_abins**n_bins
        if count <= settings.GREEDY_ENUMERATION_LIMIT:
            representative = [int(np.flatnonzero(basis_sa.action_bins == j)[0]) for j in range(n_abins)]
            maps = (
                tuple(representative[choice[b]] for b in basis_sa.state_bins.tolist())
                for choice in product(range(n_abins), repeat=n_bins)
            )
            return maps, count, "bin-level-exhaustive"

    count = n_actions**n_states
    if count <= settings.GREEDY_ENUMERATION_LIMIT:
        return product(range(n_actions), repeat=n_states), count, "exhaustive"

    rng = make_rng(seed, "dominance")
    directions = rng.standard_normal((settings.DOMINANCE_SAMPLES, basis_sa.dimension))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    maps = {tuple(greedy_actions(basis_sa, theta).tolist()) for theta in directions}
    return sorted(maps), len(maps), "sampled"


def dominance_check(
    sigma_gamma: GramMatrix,
    basis_sa: FeatureBasis,
    pi_state: np.ndarray,
    beta: float,
    thetas: Optional[Iterable[ParameterVector]] = None,
    seed: int = 0,
    batch_size: int = 4096,
) -> DominanceReport:
    """
    Check beta^2 Sigma_theta < Sigma_gamma over the greedy maps: all maps
    when enumerable, otherwise those induced by sampled directions.
    """
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"discount beta must lie in (0, 1), got {beta}")
    if not basis_sa.over_actions:
        raise ValidationError("dominance needs a state-action basis")
    pi_state = np.asarray(pi_state, dtype=float)
    features = basis_sa.by_state_action
    rows = np.arange(basis_sa.num_states)

    maps, count, method = _candidate_maps(basis_sa, thetas, seed)
    worst_margin, worst_map = np.inf, ()
    batch = []

    def flush():
        nonlocal worst_margin, worst_map
        actions = np.array(batch, dtype=np.int64)
        margins = _batched_margins(sigma_gamma.matrix, features[rows[None, :], actions], pi_state, beta)
        i = int(np.argmin(margins))
        if margins[i] < worst_margin:
            worst_margin, worst_map = float(margins[i]), batch[i]
        batch.clear()

    for greedy_map in maps:
        batch.append(tuple(greedy_map))
        if len(batch) == batch_size:
            flush()
    if batch:
        flush()

    logger.info("dominance check (%s, %d maps): worst margin %.6g", method, count, worst_margin)
    return DominanceReport(
        holds=worst_margin > 0.0,
        worst_margin=worst_margin,
        n_policies=count,
        method=method,
        beta=beta,
        worst_policy=list(worst_map),
    )
