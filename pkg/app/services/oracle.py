"""
Oracle service - exact linear algebra on enumerable models

Invariant law of the joint chain, the stationary regime MDP, Bellman
operators and their fixed points, mixing and Gordin diagnostics.
"""
import logging
import math
from typing import Optional, Union

import numpy as np

from app.core.config import settings
from app.core.errors import (
    CoverageError,
    ReducibleChainError,
    SingularSystemError,
    ValidationError,
)
from app.core.rng import make_rng
from app.models.features import FeatureBasis, ParameterVector, QuantizerBasis
from app.models.oracle import FixedPointSolution, StationaryRegimeMDP, ValueTable, WindowModel
from app.models.pomdp import FiniteMemoryPolicy, PomdpSpec, Predictor
from app.schemas.reports import ContractionReport, CovarianceCheck, GordinReport, MixingProfile
from app.services.features import l2_norm, project, projection_matrix
from app.services.model import codec_for_policy, window_posterior


logger = logging.getLogger(__name__)

Function = Union[ValueTable, np.ndarray]


def _values(f: Function) -> np.ndarray:
    if isinstance(f, ValueTable):
        return f.values
    return np.asarray(f, dtype=float)


# ============== Invariant distribution ==============

def second_eigenvalue_modulus(chain: np.ndarray) -> float:
    moduli = np.sort(np.abs(np.linalg.eigvals(np.asarray(chain, dtype=float))))[::-1]
    return float(moduli[1]) if moduli.size > 1 else 0.0


def invariant_distribution(chain: np.ndarray) -> np.ndarray:
    """
    Power iteration from the uniform law until successive iterates differ by
    less than the configured L1 tolerance; uniqueness checked on the spectrum.
    """
    chain = np.asarray(chain, dtype=float)
    if chain.ndim != 2 or chain.shape[0] != chain.shape[1]:
        raise ValidationError(f"chain must be a square matrix, got shape {chain.shape}")
    if np.any(chain < 0) or np.abs(chain.sum(axis=1) - 1.0).max() > settings.KERNEL_TOL:
        raise ValidationError("chain rows are not probability distributions")

    n = chain.shape[0]
    pi = np.full(n, 1.0 / n)
    for iteration in range(1, settings.POWER_ITERATION_CAP + 1):
        nxt = pi @ chain
        nxt /= nxt.sum()
        change = float(np.abs(nxt - pi).sum())
        pi = nxt
        if change < settings.POWER_ITERATION_TOL:
            break
    else:
        raise ReducibleChainError(
            f"power iteration did not settle within {settings.POWER_ITERATION_CAP} iterations "
            "(periodic or reducible chain)"
        )

    modulus = second_eigenvalue_modulus(chain)
    if modulus >= 1.0 - settings.SPECTRAL_GAP_TOL:
        raise ReducibleChainError(
            f"second eigenvalue modulus {modulus:.12g} leaves no spectral gap; the invariant law is not unique",
            modulus=modulus,
        )
    logger.debug("invariant distribution after %d iterations, |lambda_2|=%.6g", iteration, modulus)
    return pi


# ============== Stationary regime MDP ==============

def build_stationary_mdp(
    chain: np.ndarray,
    pi_joint: np.ndarray,
    spec: PomdpSpec,
    beta: float,
    require_coverage: bool = False,
) -> StationaryRegimeMDP:
    """
    c(s, u) = E_pi[C | S = s, U = u] and eta(s1 | s, u) from the invariant law
    of the joint chain over (h, x, u).

    Pairs with zero mass get the version pi(x | s) (uniform when s itself is
    null) and are listed in ``null_pairs``; ``require_coverage`` turns them
    into a CoverageError.
    """
    n_states, n_actions = spec.num_states, spec.num_actions
    size = np.asarray(chain).shape[0]
    if size % (n_states * n_actions):
        raise ValidationError(f"joint chain of size {size} does not factor over |X|={n_states}, |U|={n_actions}")
    n_windows = size // (n_states * n_actions)

    weights = np.asarray(pi_joint, dtype=float).reshape(n_windows, n_states, n_actions)
    # window-to-window kernel from every (h, x, u)
    window_kernel = np.asarray(chain).reshape(n_windows, n_states, n_actions, n_windows, n_states, n_actions)
    window_kernel = window_kernel.sum(axis=(4, 5))

    pi_sa = weights.sum(axis=1)
    pi_state = pi_sa.sum(axis=1)
    marginal_hx = weights.sum(axis=2)

    tol = settings.PROBABILITY_TOL
    fallback = np.full((n_windows, n_states), 1.0 / n_states)
    seen = pi_state > tol
    fallback[seen] = marginal_hx[seen] / pi_state[seen, None]

    null = pi_sa <= tol
    conditional = np.where(
        null[:, None, :],
        fallback[:, :, None],
        weights / np.where(null, 1.0, pi_sa)[:, None, :],
    )

    cost = np.einsum("hxu,xu->hu", conditional, spec.cost)
    kernel = np.einsum("hxu,hxut->hut", conditional, window_kernel)

    null_pairs = [tuple(map(int, pair)) for pair in np.argwhere(null)]
    if null_pairs:
        logger.warning("%d state-action pairs carry no stationary mass", len(null_pairs))
        if require_coverage:
            raise CoverageError(null_pairs)

    mdp = StationaryRegimeMDP(
        cost=cost,
        kernel=kernel,
        beta=beta,
        pi_state=pi_state,
        pi_sa=pi_sa,
        null_pairs=tuple(null_pairs),
    )
    logger.info("stationary regime MDP built: %d windows, %d actions", n_windows, n_actions)
    return mdp


def aggregate_mdp(mdp: StationaryRegimeMDP, quantizer: QuantizerBasis) -> StationaryRegimeMDP:
    """Stationary regime MDP of the binned process (state bins x action bins)"""
    if quantizer.state_bins is None or quantizer.state_bins.size != mdp.num_states:
        raise ValidationError("quantizer does not partition the MDP states")
    state_onehot = np.eye(quantizer.num_state_bins)[quantizer.state_bins]
    if quantizer.action_bins is None:
        action_onehot = np.eye(mdp.num_actions)
    else:
        if quantizer.action_bins.size != mdp.num_actions:
            raise ValidationError("quantizer action bins do not cover the MDP actions")
        action_onehot = np.eye(quantizer.num_action_bins)[quantizer.action_bins]

    pi_bins = state_onehot.T @ mdp.pi_sa @ action_onehot
    null = pi_bins <= settings.PROBABILITY_TOL

    # null bins average their member pairs uniformly
    member_null = state_onehot @ null.astype(float) @ action_onehot.T > 0
    weights = np.where(member_null, 1.0, mdp.pi_sa)
    bin_weight = state_onehot.T @ weights @ action_onehot

    cost = (state_onehot.T @ (weights * mdp.cost) @ action_onehot) / bin_weight
    kernel = np.einsum("sb,ua,su,sut,tc->bac", state_onehot, action_onehot, weights, mdp.kernel, state_onehot)
    kernel /= bin_weight[:, :, None]

    return StationaryRegimeMDP(
        cost=cost,
        kernel=kernel,
        beta=mdp.beta,
        pi_state=pi_bins.sum(axis=1),
        pi_sa=pi_bins,
        null_pairs=tuple(tuple(map(int, pair)) for pair in np.argwhere(null)),
    )


def approximate_model(
    spec: PomdpSpec,
    policy: FiniteMemoryPolicy,
    predictor: Predictor,
    memory_n: Optional[int] = None,
    beta: float = 0.8,
) -> WindowModel:
    """
    Finite-window model with a fixed predictor at the oldest window time:
    cost and kernel come from P^predictor(X_t | h_t). Windows impossible under
    the predictor fall back to the predictor itself.
    """
    codec = codec_for_policy(spec, policy, memory_n)
    n_windows, n_actions = codec.size, spec.num_actions
    cost = np.zeros((n_windows, n_actions))
    kernel = np.zeros((n_windows, n_actions, n_windows))
    shift = codec.shift_table
    for h, window in enumerate(codec.windows()):
        posterior = window_posterior(spec, predictor.probs, window)
        if posterior is None:
            posterior = predictor.probs
        cost[h] = posterior @ spec.cost
        for u in range(n_actions):
            next_obs = (posterior @ spec.transition[:, u, :]) @ spec.observation
            np.add.at(kernel[h, u], shift[h, :, u], next_obs)
    return WindowModel(cost=cost, kernel=kernel, beta=beta)


def stationary_window_model(model: WindowModel, policy: FiniteMemoryPolicy) -> StationaryRegimeMDP:
    """``model`` weighted by the invariant law of its own window chain under ``policy``"""
    pi_state = invariant_distribution(model.policy_kernel(policy))
    pi_sa = pi_state[:, None] * policy.table
    null_pairs = tuple(tuple(map(int, pair)) for pair in np.argwhere(pi_sa <= settings.PROBABILITY_TOL))
    return StationaryRegimeMDP(
        cost=model.cost,
        kernel=model.kernel,
        beta=model.beta,
        pi_state=pi_state,
        pi_sa=pi_sa,
        null_pairs=null_pairs,
    )


# ============== Bellman operators ==============

def bellman_policy(f: Function, mdp: WindowModel, policy: FiniteMemoryPolicy) -> ValueTable:
    """(T^gamma f)(s) = sum_u gamma(u|s) [c(s, u) + beta sum_s1 eta(s1|s, u) f(s1)]"""
    values = _values(f)
    if values.shape != (mdp.num_states,):
        raise ValidationError(f"function over {values.shape} does not match {mdp.num_states} states")
    target = mdp.cost + mdp.beta * (mdp.kernel @ values)
    return ValueTable(np.einsum("su,su->s", policy.table, target), weights=getattr(mdp, "pi_state", None))


def bellman_optimal(g: Function, mdp: WindowModel) -> ValueTable:
    """(T g)(s, u) = c(s, u) + beta sum_s1 eta(s1|s, u) min_v g(s1, v)"""
    values = _values(g)
    if values.shape != (mdp.num_states, mdp.num_actions):
        raise ValidationError(f"Q table of shape {values.shape} does not match the MDP")
    return ValueTable(
        mdp.cost + mdp.beta * (mdp.kernel @ values.min(axis=1)),
        weights=getattr(mdp, "pi_sa", None),
    )


def policy_value(mdp: WindowModel, policy: FiniteMemoryPolicy) -> ValueTable:
    """J^gamma by solving (I - beta P_gamma) J = c_gamma"""
    if policy.table.shape != (mdp.num_states, mdp.num_actions):
        raise ValidationError(f"policy of shape {policy.table.shape} does not match the MDP")
    system = np.eye(mdp.num_states) - mdp.beta * mdp.policy_kernel(policy)
    values = np.linalg.solve(system, mdp.policy_cost(policy))
    return ValueTable(values, weights=getattr(mdp, "pi_state", None))


def value_iteration(mdp: WindowModel, tol: Optional[float] = None) -> tuple[ValueTable, int, float]:
    """
    Q* from Q = 0, stopping once the certified error
    beta/(1-beta) ||Q_k - Q_{k-1}||_inf drops below ``tol``.
    Returns (Q*, iterations, last successive difference).
    """
    tol = settings.VALUE_ITERATION_TOL if tol is None else tol
    q = np.zeros((mdp.num_states, mdp.num_actions))
    factor = mdp.beta / (1.0 - mdp.beta)
    residual = math.inf
    for iteration in range(1, settings.VALUE_ITERATION_CAP + 1):
        nxt = mdp.cost + mdp.beta * (mdp.kernel @ q.min(axis=1))
        residual = float(np.abs(nxt - q).max())
        q = nxt
        if factor * residual < tol:
            break
    else:
        logger.warning("value iteration hit the cap with residual %.3g", residual)
    logger.debug("value iteration: %d iterations, residual %.3g", iteration, residual)
    return ValueTable(q, weights=getattr(mdp, "pi_sa", None)), iteration, residual


# ============== Projected fixed points ==============

def _policy_tables(mdp: StationaryRegimeMDP, basis: FeatureBasis, policy: FiniteMemoryPolicy):
    if basis.over_actions or basis.num_states != mdp.num_states:
        raise ValidationError("policy evaluation needs a state basis over the MDP states")
    return basis.matrix, mdp.policy_kernel(policy), mdp.policy_cost(policy)


def solve_projected_fixed_point(
    mdp: StationaryRegimeMDP,
    basis: FeatureBasis,
    policy: FiniteMemoryPolicy,
) -> FixedPointSolution:
    """
    A = E_pi[Phi(S)(Phi(S) - beta Phi(S1))^T], b = E_pi[Phi(S) C], theta* = A^{-1} b,
    with the residual ||Pi T^gamma(theta*^T Phi) - theta*^T Phi||_{2, pi}.
    """
    phi, kernel, cost = _policy_tables(mdp, basis, policy)
    weights = mdp.pi_state
    A = phi.T @ (weights[:, None] * (phi - mdp.beta * kernel @ phi))
    b = phi.T @ (weights * cost)

    # Gram condition first: rank deficiency of the basis under pi
    projection = projection_matrix(basis, weights)

    singular = float(np.linalg.svd(A, compute_uv=False).min())
    if singular <= settings.SINGULAR_TOL:
        raise SingularSystemError(singular, what="projected fixed-point matrix A")
    theta = np.linalg.solve(A, b)
    sigma_min_sym = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])

    approximation = phi @ theta
    image = projection @ (cost + mdp.beta * kernel @ approximation)
    residual = l2_norm(image - approximation, weights)
    logger.info("projected fixed point solved: d=%d, residual %.3g", basis.dimension, residual)
    return FixedPointSolution(A=A, b=b, theta=theta, sigma_min_sym=sigma_min_sym, residual=residual)


def projected_policy_iteration(
    mdp: StationaryRegimeMDP,
    basis: FeatureBasis,
    policy: FiniteMemoryPolicy,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> tuple[ParameterVector, int]:
    """Iterate theta <- coefficients of Pi T^gamma(theta^T Phi) from zero"""
    phi, kernel, cost = _policy_tables(mdp, basis, policy)
    theta = np.zeros(basis.dimension)
    for iteration in range(1, max_iter + 1):
        nxt = project(cost + mdp.beta * kernel @ (phi @ theta), mdp.pi_state, basis)
        change = float(np.abs(nxt - theta).max())
        theta = nxt
        if change < tol:
            break
    return theta, iteration


def projected_q_iteration(
    mdp: StationaryRegimeMDP,
    basis_sa: FeatureBasis,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> tuple[ParameterVector, bool, int]:
    """
    Iterate theta <- coefficients of Pi T(theta^T Phi) in L2(pi(s, u)).
    Returns (theta, converged, iterations); leaving the divergence norm stops early.
    """
    if not basis_sa.over_actions or basis_sa.num_states != mdp.num_states:
        raise ValidationError("projected Q iteration needs a state-action basis over the MDP")
    weights = mdp.pi_sa.reshape(-1)
    theta = np.zeros(basis_sa.dimension)
    for iteration in range(1, max_iter + 1):
        target = bellman_optimal(basis_sa.values(theta), mdp).values
        nxt = project(target, weights, basis_sa)
        if not np.all(np.isfinite(nxt)) or np.linalg.norm(nxt) > settings.DIVERGENCE_NORM:
            logger.warning("projected Q iteration left the bounded region at iteration %d", iteration)
            return nxt, False, iteration
        change = float(np.abs(nxt - theta).max())
        theta = nxt
        if change < tol:
            return theta, True, iteration
    return theta, False, max_iter


def expected_td_update(
    mdp: StationaryRegimeMDP,
    basis: FeatureBasis,
    policy: FiniteMemoryPolicy,
    theta: ParameterVector,
) -> np.ndarray:
    """E_pi[Phi(S)(C + beta theta^T Phi(S1) - theta^T Phi(S))], which equals -(A theta - b)"""
    if basis.over_actions:
        raise ValidationError("TD(0) updates need a state basis")
    values = basis.values(theta)
    temporal = mdp.cost + mdp.beta * (mdp.kernel @ values) - values[:, None]
    return basis.matrix.T @ (mdp.pi_state * np.einsum("su,su->s", policy.table, temporal))


# ============== Contraction ==============

def contraction_ratio(
    mdp: StationaryRegimeMDP,
    basis: FeatureBasis,
    policy: FiniteMemoryPolicy,
    f: np.ndarray,
    g: np.ndarray,
) -> Optional[float]:
    """||Pi T^gamma f - Pi T^gamma g||_{2,pi} / ||f - g||_{2,pi}, None when f = g in L2(pi)"""
    denominator = l2_norm(np.asarray(f) - np.asarray(g), mdp.pi_state)
    if denominator <= 0.0:
        return None
    projection = projection_matrix(basis, mdp.pi_state)
    image_f = projection @ bellman_policy(f, mdp, policy).values
    image_g = projection @ bellman_policy(g, mdp, policy).values
    return l2_norm(image_f - image_g, mdp.pi_state) / denominator


def contraction_estimate(
    mdp: StationaryRegimeMDP,
    basis: FeatureBasis,
    policy: FiniteMemoryPolicy,
    n_pairs: int,
    seed: int,
) -> ContractionReport:
    if n_pairs < 1:
        raise ValidationError(f"n_pairs must be at least 1, got {n_pairs}")
    rng = make_rng(seed, "contraction")
    pairs = rng.standard_normal((n_pairs, 2, mdp.num_states))
    ratios, skipped = [], 0
    for f, g in pairs:
        ratio = contraction_ratio(mdp, basis, policy, f, g)
        if ratio is None:
            skipped += 1
        else:
            ratios.append(ratio)
    max_ratio = max(ratios, default=0.0)
    return ContractionReport(
        max_ratio=max_ratio,
        beta=mdp.beta,
        n_evaluated=len(ratios),
        n_skipped=skipped,
        holds=max_ratio <= mdp.beta + settings.BOUND_SLACK_TOL,
    )


# ============== Mixing ==============

def _deviation_powers(chain: np.ndarray, pi: np.ndarray, k_max: int):
    """
    Yield P^k - 1 pi^T for k = 0..k_max, using powers of the deflated matrix
    P - 1 pi^T for k >= 1 so small deviations keep their relative accuracy.
    """
    chain = np.asarray(chain, dtype=float)
    pi = np.asarray(pi, dtype=float)
    n = chain.shape[0]
    yield np.eye(n) - pi[None, :]
    deflated = chain - pi[None, :]
    power = deflated
    for _ in range(k_max):
        yield power
        power = power @ deflated


def _fitted_rate(alpha_bar: list[float]) -> Optional[float]:
    points = [(k, math.log(a)) for k, a in enumerate(alpha_bar) if k >= 1 and a > 1e-280]
    points = points[len(points) // 2:]
    if len(points) < 3:
        return None
    ks, logs = np.array(points).T
    slope = np.polyfit(ks, logs, 1)[0]
    return float(math.exp(slope))


def mixing_profile(chain: np.ndarray, pi: np.ndarray, k_max: int) -> MixingProfile:
    """
    alpha_bar(k) = 1/2 sum_i pi_i ||P^k(i, .) - pi||_1, an upper bound on the
    strong mixing coefficient, with the partial sums of sqrt(alpha_bar(k)).
    """
    if k_max < 0:
        raise ValidationError(f"k_max must be non-negative, got {k_max}")
    pi = np.asarray(pi, dtype=float)
    alpha_bar = [
        float(0.5 * pi @ np.abs(deviation).sum(axis=1))
        for deviation in _deviation_powers(chain, pi, k_max)
    ]
    roots = np.sqrt(np.maximum(alpha_bar, 0.0))
    below = np.flatnonzero(roots < settings.MIXING_INCREMENT_TOL)
    converged_at = int(below[0]) if below.size else None
    return MixingProfile(
        alpha_bar=alpha_bar,
        sqrt_partial_sums=np.cumsum(roots).tolist(),
        summable=converged_at is not None,
        converged_at=converged_at,
        second_eigenvalue_modulus=second_eigenvalue_modulus(chain),
        fitted_rate=_fitted_rate(alpha_bar),
    )


def covariance_profile(
    chain: np.ndarray,
    pi: np.ndarray,
    f: np.ndarray,
    k_max: int,
    alpha_bar: Optional[list[float]] = None,
) -> CovarianceCheck:
    """
    Cov(f(Z_k), E[f(Z_k) | Z_0]) under a stationary start, checked against
    4 alpha_bar(k) ||f||_inf^2.
    """
    pi = np.asarray(pi, dtype=float)
    f = np.asarray(f, dtype=float)
    if alpha_bar is None:
        alpha_bar = mixing_profile(chain, pi, k_max).alpha_bar
    scale = 4.0 * float(np.abs(f).max()) ** 2
    covariances, bounds = [], []
    for k, deviation in enumerate(_deviation_powers(chain, pi, k_max)):
        centered = deviation @ f if k else f - pi @ f
        covariances.append(float(pi @ centered**2))
        bounds.append(scale * alpha_bar[k])
    holds = all(abs(c) <= b + settings.BOUND_SLACK_TOL for c, b in zip(covariances, bounds))
    return CovarianceCheck(covariances=covariances, bounds=bounds, holds=holds)


# ============== Gordin ==============

def conditional_deviation_sums(chain: np.ndarray, pi: np.ndarray, values: np.ndarray, k_max: int) -> np.ndarray:
    """
    values[i] is a scalar, vector or matrix attached to chain state i.
    Returns norms[k, i] = ||E[values(Z_k) | Z_0 = i] - E_pi[values]|| (spectral
    norm for matrices), k = 0..k_max.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    flat = values.reshape(n, -1)
    shape = values.shape[1:]
    norms = np.empty((k_max + 1, n))
    for k, deviation in enumerate(_deviation_powers(chain, pi, k_max)):
        moved = (deviation @ flat).reshape((n,) + shape)
        if moved.ndim == 3:
            norms[k] = np.linalg.norm(moved, ord=2, axis=(1, 2))
        elif moved.ndim == 2:
            norms[k] = np.linalg.norm(moved, axis=1)
        else:
            norms[k] = np.abs(moved)
    return norms


def _stabilized_at(increments: np.ndarray, tol: float = 1e-8) -> Optional[int]:
    below = np.flatnonzero(increments < tol)
    return int(below[0]) if below.size else None


def gordin_diagnostic(
    chain: np.ndarray,
    pi: np.ndarray,
    basis: FeatureBasis,
    spec: PomdpSpec,
    beta: float,
    k_max: int = 200,
    functions: Optional[np.ndarray] = None,
) -> GordinReport:
    """
    Partial sums over k of ||E[A(Z_k) | Z_0 = z] - A|| and the same for
    b(Z) = Phi(S) C, maximized over z. A(z) is averaged over the next step
    given z, so the sums condition on the current chain state.

    ``functions`` (one table row per chain state) replaces A and b by a
    sampled family of bounded functions.
    """
    chain = np.asarray(chain, dtype=float)
    n = chain.shape[0]
    n_states, n_actions = spec.num_states, spec.num_actions
    if basis.over_actions or n % (n_states * n_actions):
        raise ValidationError("Gordin diagnostic needs a state basis and a joint chain over (h, x, u)")
    windows = np.arange(n) // (n_states * n_actions)
    hidden = (np.arange(n) // n_actions) % n_states
    actions = np.arange(n) % n_actions

    if functions is not None:
        table = np.asarray(functions, dtype=float)
        if table.shape[0] != n:
            raise ValidationError(f"function table has {table.shape[0]} rows for a chain of {n} states")
        sums = np.cumsum(conditional_deviation_sums(chain, pi, table, k_max).max(axis=1))
        increments = np.diff(sums, prepend=0.0)
        return GordinReport(
            k_max=k_max,
            a_partial_sums=sums.tolist(),
            b_partial_sums=[0.0] * (k_max + 1),
            a_sup=float(sums[-1]),
            b_sup=0.0,
            stabilized_at=_stabilized_at(increments),
            sampled_only=True,
        )

    phi = basis.matrix[windows]
    expected_next = chain @ phi
    a_values = np.einsum("nd,ne->nde", phi, phi - beta * expected_next)
    b_values = phi * spec.cost[hidden, actions][:, None]

    a_norms = conditional_deviation_sums(chain, pi, a_values, k_max).max(axis=1)
    b_norms = conditional_deviation_sums(chain, pi, b_values, k_max).max(axis=1)
    a_sums, b_sums = np.cumsum(a_norms), np.cumsum(b_norms)
    stabilized = _stabilized_at(np.maximum(a_norms, b_norms))
    logger.info("Gordin sums: A %.6g, b %.6g, stabilized at %s", a_sums[-1], b_sums[-1], stabilized)
    return GordinReport(
        k_max=k_max,
        a_partial_sums=a_sums.tolist(),
        b_partial_sums=b_sums.tolist(),
        a_sup=float(a_sums[-1]),
        b_sup=float(b_sums[-1]),
        stabilized_at=stabilized,
        sampled_only=False,
    )
