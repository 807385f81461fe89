"""
Experiment harness - config to artifact tree, and artifact comparison
"""
import asyncio
import logging
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from app.core.config import settings
from app.core.errors import (
    ArtifactError,
    ConfigError,
    DivergenceError,
    RankDeficiencyError,
    ReducibleChainError,
    ValidationError,
)
from app.models.features import FeatureBasis, QuantizerBasis
from app.models.learners import ConvergenceTrace, LearningRateSchedule
from app.models.oracle import StationaryRegimeMDP, ValueTable
from app.models.pomdp import FiniteMemoryPolicy, Predictor, WindowCodec
from app.schemas.common import ErrorResponse
from app.schemas.experiment import BasisConfig, ExperimentConfig, PolicyConfig, parse_experiment
from app.schemas.model_file import LoadedModel, load_model_file
from app.schemas.reports import DiffReport, ErrorBoundReport, FileDiff
from app.schemas.run import (
    EXIT_BOUND_VIOLATION,
    EXIT_DIVERGENCE,
    EXIT_OK,
    RunSummary,
    SeedOutcome,
)
from app.services.analysis import (
    channel_lipschitz,
    l2_bound,
    near_linearity,
    pomdp_q_bound,
    pomdp_value_bound,
    stationary_sigma_min,
    uniform_bound,
)
from app.services.belief_grid import BeliefGridSolver
from app.services.features import dominance_check, gram_exploration
from app.services.filter_stability import filter_stability
from app.services.learners import default_checkpoints, greedy_policy, run_linear_q, run_tabular_q, run_td0
from app.services.model import build_joint_chain, joint_marginals
from app.services.oracle import (
    aggregate_mdp,
    approximate_model,
    build_stationary_mdp,
    contraction_estimate,
    expected_td_update,
    gordin_diagnostic,
    invariant_distribution,
    mixing_profile,
    policy_value,
    projected_policy_iteration,
    projected_q_iteration,
    solve_projected_fixed_point,
    stationary_window_model,
    value_iteration,
)
from app.utils.files import (
    format_float,
    parse_number,
    read_csv,
    read_json,
    run_directory,
    write_csv,
    write_json,
    write_text,
)


logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"


# ============== Setup ==============

@dataclass(frozen=True, eq=False)
class ExperimentSetup:
    """Everything a run needs, resolved from the config and model file"""

    config: ExperimentConfig
    model: LoadedModel
    memory_n: int
    codec: WindowCodec
    policy: FiniteMemoryPolicy
    basis: FeatureBasis
    schedule: LearningRateSchedule
    burn_in: Optional[np.ndarray]
    checkpoints: list[int]

    @property
    def spec(self):
        return self.model.spec


@dataclass(eq=False)
class OracleResult:
    """Seed-free outputs: the stationary regime MDP, the learner's limit, reports"""

    chain: np.ndarray
    pi_joint: np.ndarray
    mdp: StationaryRegimeMDP
    theta_star: Optional[np.ndarray] = None
    bounds: list[ErrorBoundReport] = field(default_factory=list)
    diagnostics: dict[str, bool] = field(default_factory=dict)
    tables: dict[str, tuple[list[str], list[list[Any]]]] = field(default_factory=dict)
    documents: dict[str, Any] = field(default_factory=dict)


def build_policy(config: PolicyConfig, codec: WindowCodec, num_actions: int) -> FiniteMemoryPolicy:
    if config.kind == "uniform":
        policy = FiniteMemoryPolicy.uniform(codec.size, num_actions)
    elif config.kind == "table":
        table = np.asarray(config.table, dtype=float)
        if table.shape != (codec.size, num_actions):
            raise ConfigError(
                f"policy.table: expected shape {(codec.size, num_actions)}, got {table.shape}", ["policy.table"]
            )
        policy = FiniteMemoryPolicy(table)
    else:
        if len(config.action_probs) != num_actions:
            raise ConfigError(
                f"policy.action_probs: expected {num_actions} entries, got {len(config.action_probs)}",
                ["policy.action_probs"],
            )
        policy = FiniteMemoryPolicy.window_independent(codec.size, config.action_probs)
    if config.epsilon > 0:
        policy = policy.mixed(config.epsilon)
    return policy


def build_basis(config: BasisConfig, learner: str, codec: WindowCodec, num_actions: int) -> FeatureBasis:
    """State basis for TD(0), state-action basis for the Q learners"""
    if learner == "td0" and config.over_actions:
        raise ConfigError("basis.over_actions: TD(0) evaluates a state basis", ["basis.over_actions"])
    over_actions = learner != "td0"
    basis_actions = num_actions if over_actions else None
    identity_actions = np.arange(num_actions) if over_actions else None

    if config.kind == "quantizer":
        if len(config.state_bins) != codec.size:
            raise ConfigError(
                f"basis.state_bins: expected {codec.size} entries (one per window), got {len(config.state_bins)}",
                ["basis.state_bins"],
            )
        action_bins = config.action_bins
        if action_bins is not None and not over_actions:
            raise ConfigError("basis.action_bins: only state-action bases bin actions", ["basis.action_bins"])
        if over_actions and action_bins is None:
            action_bins = identity_actions
        if action_bins is not None and len(action_bins) != num_actions:
            raise ConfigError(f"basis.action_bins: expected {num_actions} entries", ["basis.action_bins"])
        return QuantizerBasis.from_bins(config.state_bins, action_bins)
    if config.kind == "observation_bins":
        return QuantizerBasis.from_observation_bins(codec, config.observation_bins, basis_actions)
    if config.kind == "indicator":
        return QuantizerBasis.from_bins(np.arange(codec.size), identity_actions, name="indicator")
    if config.kind == "constant":
        return FeatureBasis.constant(codec.size, basis_actions)

    table = np.asarray(config.table, dtype=float)
    rows = codec.size * (num_actions if over_actions else 1)
    if table.ndim != 2 or table.shape[0] != rows:
        raise ConfigError(f"basis.table: expected {rows} rows, got shape {table.shape}", ["basis.table"])
    return FeatureBasis(table, num_actions=basis_actions)


def resolve_setup(config: ExperimentConfig, base_dir: Path) -> ExperimentSetup:
    model_path = Path(config.model)
    if not model_path.is_absolute():
        model_path = base_dir / model_path
    model = load_model_file(model_path)
    spec = model.spec
    memory_n = model.memory_n if config.memory_n is None else config.memory_n
    codec = spec.window_codec(memory_n)
    if codec.size > settings.ENUMERATION_BUDGET:
        raise ConfigError(
            f"memory_n: {codec.size} windows exceed the enumeration budget {settings.ENUMERATION_BUDGET}",
            ["memory_n"],
        )

    learner = config.learner
    if learner.kind != "tabular_q" and learner.schedule.kind == "visit_count":
        raise ConfigError(
            "learner.schedule.kind: visit-count rates apply to tabular Q-learning only",
            ["learner.schedule.kind"],
        )
    schedule = LearningRateSchedule(
        kind=learner.schedule.kind, a=learner.schedule.a, t0=learner.schedule.t0, rho=learner.schedule.rho
    )
    schedule.validate_robbins_monro()

    policy = build_policy(config.policy, codec, spec.num_actions)
    basis = build_basis(config.basis, learner.kind, codec, spec.num_actions)
    if learner.theta0 is not None and len(learner.theta0) != basis.dimension:
        raise ConfigError(
            f"learner.theta0: expected {basis.dimension} entries, got {len(learner.theta0)}", ["learner.theta0"]
        )

    burn_in = None
    if config.burn_in is not None:
        if len(config.burn_in) != spec.num_actions:
            raise ConfigError(f"burn_in: expected {spec.num_actions} entries", ["burn_in"])
        burn_in = np.asarray(config.burn_in, dtype=float)

    checkpoints = (
        list(config.checkpoints)
        if config.checkpoints is not None
        else default_checkpoints(config.n_steps, config.n_checkpoints)
    )
    return ExperimentSetup(
        config=config,
        model=model,
        memory_n=memory_n,
        codec=codec,
        policy=policy,
        basis=basis,
        schedule=schedule,
        burn_in=burn_in,
        checkpoints=checkpoints,
    )


# ============== Oracle phase ==============

def _stationary_tables(result: OracleResult) -> None:
    mdp = result.mdp
    result.tables["oracle/stationary.csv"] = (
        ["window", "action", "pi_window", "pi", "cost"],
        [
            [h, u, mdp.pi_state[h], mdp.pi_sa[h, u], mdp.cost[h, u]]
            for h in range(mdp.num_states)
            for u in range(mdp.num_actions)
        ],
    )
    result.tables["oracle/kernel.csv"] = (
        ["window", "action", "next_window", "probability"],
        [[int(h), int(u), int(h1), mdp.kernel[h, u, h1]] for h, u, h1 in np.argwhere(mdp.kernel > 0.0)],
    )


def _vector_table(values: np.ndarray) -> tuple[list[str], list[list[Any]]]:
    return ["index", "value"], [[i, v] for i, v in enumerate(np.asarray(values, float).tolist())]


def _q_table(q: ValueTable) -> tuple[list[str], list[list[Any]]]:
    return ["state", "action", "value"], [
        [s, u, q.values[s, u]] for s in range(q.values.shape[0]) for u in range(q.values.shape[1])
    ]


def _filter_report(setup: ExperimentSetup, result: OracleResult, observation_bins=None):
    """L_t (or the binned L_hat_t) against the stationary hidden-state marginal"""
    config = setup.config
    spec = setup.spec
    pi_x = joint_marginals(result.pi_joint, spec, setup.codec.size).sum(axis=(0, 2))
    priors = config.oracle.priors or [spec.prior.tolist()]
    report = filter_stability(
        spec,
        Predictor(pi_x / pi_x.sum()),
        [Predictor(np.asarray(prior, float)) for prior in priors],
        setup.memory_n,
        t_max=config.oracle.t_max,
        beta=config.beta,
        observation_bins=observation_bins,
        observation_points=setup.model.observation_points,
        exploration=setup.policy if observation_bins is None else None,
        burn_in=setup.burn_in,
    )
    name = "filter_stability_binned" if observation_bins is not None else "filter_stability"
    result.documents[f"oracle/{name}.json"] = report
    result.tables[f"oracle/{name}.csv"] = (["t", "loss"], [[t, v] for t, v in enumerate(report.losses)])
    return report, pi_x


def _td0_oracle(setup: ExperimentSetup, result: OracleResult) -> None:
    config, oracle = setup.config, setup.config.oracle
    mdp, basis, policy = result.mdp, setup.basis, setup.policy
    tol = settings.FIXED_POINT_TOL

    fixed = solve_projected_fixed_point(mdp, basis, policy)
    iterated, iterations = projected_policy_iteration(mdp, basis, policy)
    update = expected_td_update(mdp, basis, policy, fixed.theta)
    iteration_gap = float(np.abs(iterated - fixed.theta).max())
    update_norm = float(np.linalg.norm(update))
    result.theta_star = fixed.theta
    result.tables["oracle/theta_star.csv"] = _vector_table(fixed.theta)
    result.documents["oracle/fixed_point.json"] = {
        "A": fixed.A,
        "b": fixed.b,
        "theta_star": fixed.theta,
        "sigma_min_sym": fixed.sigma_min_sym,
        "residual": fixed.residual,
        "iteration_gap": iteration_gap,
        "iterations": iterations,
        "expected_update_norm": update_norm,
    }
    result.diagnostics["fixed_point_residual"] = fixed.residual < tol
    result.diagnostics["fixed_point_iteration"] = iteration_gap < tol
    result.diagnostics["expected_update_null"] = update_norm < tol

    values = policy_value(mdp, policy)
    result.tables["oracle/values.csv"] = (
        ["window", "value", "approximation"],
        [[h, v, a] for h, (v, a) in enumerate(zip(values.values.tolist(), basis.values(fixed.theta).tolist()))],
    )

    contraction = contraction_estimate(mdp, basis, policy, oracle.contraction_pairs, seed=0)
    result.documents["oracle/contraction.json"] = contraction
    result.diagnostics["l2_contraction"] = contraction.holds

    if oracle.gordin:
        gordin = gordin_diagnostic(result.chain, result.pi_joint, basis, setup.spec, config.beta, oracle.k_max)
        result.documents["oracle/gordin.json"] = gordin
        result.diagnostics["gordin_stabilized"] = gordin.stabilized_at is not None

    if not oracle.bounds:
        return
    result.bounds.append(l2_bound(values, fixed.theta, basis, mdp))
    result.bounds.append(uniform_bound(values, fixed.theta, basis, mdp))
    if oracle.filter_stability:
        fs, pi_x = _filter_report(setup, result)
        try:
            approximate = stationary_window_model(
                approximate_model(setup.spec, policy, Predictor(pi_x / pi_x.sum()), setup.memory_n, config.beta),
                policy,
            )
            approximate_fixed = solve_projected_fixed_point(approximate, basis, policy)
        except (ReducibleChainError, RankDeficiencyError) as exc:
            logger.warning("no value bound for the approximate window model: %s", exc.detail)
            return
        lambda_hat, _ = near_linearity(policy_value(approximate, policy), basis)
        sigma_min = stationary_sigma_min(basis, approximate)
        result.documents["oracle/approximate_fixed_point.json"] = {
            "theta_star": approximate_fixed.theta,
            "residual": approximate_fixed.residual,
            "lambda_hat": lambda_hat,
            "sigma_min": sigma_min,
        }
        result.bounds.append(
            pomdp_value_bound(
                setup.spec,
                policy,
                basis,
                approximate_fixed.theta,
                fs,
                lambda_hat,
                sigma_min,
                config.beta,
                burn_in=setup.burn_in,
                memory_n=setup.memory_n,
            )
        )


def _linear_q_oracle(setup: ExperimentSetup, result: OracleResult) -> None:
    oracle = setup.config.oracle
    mdp, basis = result.mdp, setup.basis

    q_star, iterations, residual = value_iteration(mdp)
    result.tables["oracle/q_star.csv"] = _q_table(q_star)

    theta, converged, q_iterations = projected_q_iteration(mdp, basis)
    result.documents["oracle/projected_q.json"] = {
        "converged": converged,
        "iterations": q_iterations,
        "theta": theta,
        "value_iteration": {"iterations": iterations, "residual": residual},
    }
    result.diagnostics["projected_q_converged"] = converged
    if converged:
        result.theta_star = theta
        result.tables["oracle/theta_star.csv"] = _vector_table(theta)
    else:
        logger.warning("projected Q iteration did not converge; seeds are traced without an oracle limit")

    if oracle.dominance:
        dominance = dominance_check(gram_exploration(basis, mdp.pi_sa), basis, mdp.pi_state, mdp.beta)
        result.documents["oracle/dominance.json"] = dominance
        result.diagnostics["covariance_dominance"] = dominance.holds


def _tabular_q_oracle(setup: ExperimentSetup, result: OracleResult) -> None:
    config, oracle = setup.config, setup.config.oracle
    quantizer = setup.basis
    aggregated = aggregate_mdp(result.mdp, quantizer)
    q_star, iterations, residual = value_iteration(aggregated)
    result.theta_star = q_star.values.reshape(-1)
    result.tables["oracle/q_star.csv"] = _q_table(q_star)
    result.documents["oracle/value_iteration.json"] = {
        "iterations": iterations,
        "residual": residual,
        "null_bins": [list(pair) for pair in aggregated.null_pairs],
    }

    if not (oracle.bounds and oracle.filter_stability):
        return
    if config.basis.kind == "quantizer":
        logger.info("quantizer basis is not induced by observation bins; skipping the quantized Q bound")
        return
    spec = setup.spec
    bins = config.basis.observation_bins if config.basis.kind == "observation_bins" else list(range(spec.num_obs))
    fs_hat, _ = _filter_report(setup, result, observation_bins=bins)
    alpha_y = setup.model.alpha_y
    if alpha_y is None:
        alpha_y = channel_lipschitz(spec, setup.model.observation_points)
    solver = BeliefGridSolver(spec, config.beta, oracle.belief_resolution)
    result.bounds.append(
        pomdp_q_bound(
            spec,
            greedy_policy(q_star, quantizer),
            fs_hat,
            alpha_y,
            config.beta,
            burn_in=setup.burn_in,
            memory_n=setup.memory_n,
            solver=solver,
        )
    )


def compute_oracle(setup: ExperimentSetup) -> OracleResult:
    """Seed-free oracle: everything here is a function of the config and model alone"""
    config = setup.config
    chain = build_joint_chain(setup.spec, setup.policy, setup.memory_n)
    pi_joint = invariant_distribution(chain)
    mdp = build_stationary_mdp(
        chain, pi_joint, setup.spec, config.beta, require_coverage=config.learner.kind != "td0"
    )
    result = OracleResult(chain=chain, pi_joint=pi_joint, mdp=mdp)
    _stationary_tables(result)

    if config.oracle.mixing:
        profile = mixing_profile(chain, pi_joint, config.oracle.k_max)
        result.documents["oracle/mixing.json"] = profile
        result.tables["oracle/mixing.csv"] = (
            ["k", "alpha_bar", "sqrt_partial_sum"],
            [[k, a, s] for k, (a, s) in enumerate(zip(profile.alpha_bar, profile.sqrt_partial_sums))],
        )
        result.diagnostics["mixing_summable"] = profile.summable

    if config.learner.kind == "td0":
        _td0_oracle(setup, result)
    elif config.learner.kind == "linear_q":
        _linear_q_oracle(setup, result)
    else:
        _tabular_q_oracle(setup, result)

    for report in result.bounds:
        level = logging.INFO if report.holds else logging.WARNING
        logger.log(level, "bound %s: lhs=%.6g rhs=%.6g slack=%.3g", report.name, report.lhs, report.rhs, report.slack)
    return result


# ============== Seeds ==============

def run_seed(setup: ExperimentSetup, oracle: OracleResult, seed: int) -> ConvergenceTrace:
    config = setup.config
    common = dict(
        checkpoints=setup.checkpoints,
        memory_n=setup.memory_n,
        burn_in=setup.burn_in,
    )
    if config.learner.kind == "td0":
        return run_td0(
            setup.spec, setup.policy, setup.basis, setup.schedule, config.beta, config.n_steps, seed,
            theta_star=oracle.theta_star, theta0=config.learner.theta0, **common,
        )
    if config.learner.kind == "linear_q":
        return run_linear_q(
            setup.spec, setup.policy, setup.basis, setup.schedule, config.beta, config.n_steps, seed,
            theta_star=oracle.theta_star, theta0=config.learner.theta0, **common,
        )
    return run_tabular_q(
        setup.spec, setup.policy, setup.basis, config.beta, config.n_steps, seed,
        q_star=oracle.theta_star, initial_value=config.learner.initial_value, **common,
    )


def seed_outcome(seed: int, trace: ConvergenceTrace, theta_star: Optional[np.ndarray], sup_norm: bool) -> SeedOutcome:
    relative = None
    distance = trace.final_distance
    if distance is not None and theta_star is not None:
        scale = float(np.abs(theta_star).max()) if sup_norm else float(np.linalg.norm(theta_star))
        relative = distance / scale if scale > 0.0 else None
    error = None
    if trace.diverged:
        error = ErrorResponse.from_error(DivergenceError(trace.divergence_step, trace.divergence_norm))
    return SeedOutcome(
        seed=seed,
        n_checkpoints=len(trace.steps),
        final_step=trace.steps[-1] if trace.steps else None,
        final_distance=distance,
        relative_error=relative,
        diverged=trace.diverged,
        error=error,
        starved=[list(cell) for cell in trace.starved],
    )


def _trace_rows(trace: ConvergenceTrace) -> tuple[list[str], list[list[Any]]]:
    width = trace.snapshots.shape[1] if trace.snapshots.ndim == 2 else 0
    header = ["step", "distance"] + [f"theta_{i}" for i in range(width)]
    rows = []
    for i, step in enumerate(trace.steps):
        distance = None if trace.distances is None else trace.distances[i]
        rows.append([step, distance] + trace.snapshots[i].tolist())
    return header, rows


# ============== Summary ==============

def exit_code_for(summary: RunSummary) -> int:
    """Bound violations outrank divergence"""
    if summary.violations:
        return EXIT_BOUND_VIOLATION
    if summary.diverged_seeds:
        return EXIT_DIVERGENCE
    return EXIT_OK


def render_summary(summary: RunSummary) -> str:
    env = Environment(
        loader=FileSystemLoader(TEMPLATE_DIR),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )
    env.filters["num"] = lambda value: "-" if value is None else format_float(value)
    return env.get_template("summary.md.j2").render(summary=summary)


# ============== Service ==============

class ExperimentService:
    """Runs one experiment config into an artifact directory"""

    def __init__(self, config: ExperimentConfig, base_dir: Optional[Path] = None, threads: Optional[int] = None):
        self.config = config
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        self.threads = settings.DEFAULT_THREADS if threads is None else int(threads)
        if self.threads < 1:
            raise ValidationError(f"threads must be at least 1, got {self.threads}")

    def with_seeds(self, seeds: Sequence[int]) -> "ExperimentService":
        """Same experiment with the seed list replaced (validated like the config)"""
        document = self.config.model_dump()
        document["seeds"] = list(seeds)
        return ExperimentService(parse_experiment(document, "--seeds"), self.base_dir, self.threads)

    def output_root(self, out_dir: Optional[str | Path] = None) -> Path:
        if out_dir is not None:
            return Path(out_dir)
        if self.config.output_dir is not None:
            path = Path(self.config.output_dir)
            return path if path.is_absolute() else self.base_dir / path
        return Path(settings.OUTPUT_DIR)

    def _prepare(self, run_dir: Path) -> None:
        if run_dir.exists():
            if (run_dir / "config.json").is_file():
                shutil.rmtree(run_dir)
            elif any(run_dir.iterdir()):
                raise ArtifactError(f"{run_dir} exists and is not a previous run directory")
        run_dir.mkdir(parents=True, exist_ok=True)

    async def _write_oracle(self, run_dir: Path, setup: ExperimentSetup, oracle: OracleResult) -> None:
        config = self.config
        writes = [
            write_json(
                run_dir / "config.json",
                {
                    "config": config.model_dump(mode="json"),
                    "resolved": {
                        "model": setup.spec.name,
                        "memory_n": setup.memory_n,
                        "num_windows": setup.codec.size,
                        "dimension": setup.basis.dimension,
                        "checkpoints": setup.checkpoints,
                    },
                },
            )
        ]
        for path, (header, rows) in oracle.tables.items():
            writes.append(write_csv(run_dir / path, header, rows))
        for path, document in oracle.documents.items():
            writes.append(write_json(run_dir / path, document))
        for report in oracle.bounds:
            writes.append(write_json(run_dir / "reports" / f"{report.name}.json", report))
        await asyncio.gather(*writes)

    async def _run_seeds(self, run_dir: Path, setup: ExperimentSetup, oracle: OracleResult) -> list[SeedOutcome]:
        semaphore = asyncio.Semaphore(self.threads)
        sup_norm = self.config.learner.kind == "tabular_q"

        async def one(seed: int) -> SeedOutcome:
            async with semaphore:
                trace = await asyncio.to_thread(run_seed, setup, oracle, seed)
            outcome = seed_outcome(seed, trace, oracle.theta_star, sup_norm)
            header, rows = _trace_rows(trace)
            document = outcome.model_dump()
            if trace.visit_counts is not None:
                document["visit_counts"] = trace.visit_counts
            await asyncio.gather(
                write_csv(run_dir / "seeds" / f"seed-{seed}.csv", header, rows),
                write_json(run_dir / "seeds" / f"seed-{seed}.json", document),
            )
            if outcome.diverged:
                logger.warning("seed %d diverged: %s", seed, outcome.error.detail)
            else:
                logger.info("seed %d finished: distance to oracle %s", seed, outcome.final_distance)
            return outcome

        return list(await asyncio.gather(*(one(seed) for seed in self.config.seeds)))

    async def run(self, out_dir: Optional[str | Path] = None, oracle_only: bool = False) -> tuple[RunSummary, Path]:
        config = self.config
        setup = resolve_setup(config, self.base_dir)
        logger.info(
            "experiment %s: model %s, %d windows, learner %s, d=%d",
            config.name, setup.spec.name, setup.codec.size, config.learner.kind, setup.basis.dimension,
        )
        oracle = await asyncio.to_thread(compute_oracle, setup)
        logger.info("oracle built")

        run_dir = run_directory(self.output_root(out_dir), config.name)
        self._prepare(run_dir)
        await self._write_oracle(run_dir, setup, oracle)
        outcomes = [] if oracle_only else await self._run_seeds(run_dir, setup, oracle)

        summary = RunSummary(
            name=config.name,
            model=setup.spec.name,
            learner=config.learner.kind,
            basis=setup.basis.name,
            beta=config.beta,
            memory_n=setup.memory_n,
            num_windows=setup.codec.size,
            dimension=setup.basis.dimension,
            n_steps=config.n_steps,
            oracle_only=oracle_only,
            theta_star=None if oracle.theta_star is None else oracle.theta_star.tolist(),
            diagnostics=oracle.diagnostics,
            bounds=oracle.bounds,
            seeds=outcomes,
        )
        summary.exit_code = exit_code_for(summary)
        await write_json(run_dir / "summary.json", summary)
        await write_text(run_dir / "summary.md", render_summary(summary))
        logger.info("run %s written to %s (exit code %d)", config.name, run_dir, summary.exit_code)
        return summary, run_dir


# ============== Compare ==============

def _close(a: float, b: float, rtol: float, atol: float) -> bool:
    if math.isnan(a) and math.isnan(b):
        return True
    return math.isclose(a, b, rel_tol=rtol, abs_tol=atol)


def _compare_csv(path_a: Path, path_b: Path, rel: str, rtol: float, atol: float) -> Optional[FileDiff]:
    rows_a, rows_b = read_csv(path_a), read_csv(path_b)
    shape_a = (len(rows_a), max((len(r) for r in rows_a), default=0))
    shape_b = (len(rows_b), max((len(r) for r in rows_b), default=0))
    if shape_a != shape_b:
        return FileDiff(path=rel, kind="csv", mismatches=1, detail=f"shape {shape_a} vs {shape_b}")
    mismatches, worst, first = 0, 0.0, None
    for i, (row_a, row_b) in enumerate(zip(rows_a, rows_b)):
        for j, (cell_a, cell_b) in enumerate(zip(row_a, row_b)):
            x, y = parse_number(cell_a), parse_number(cell_b)
            if x is not None and y is not None:
                if not math.isnan(x - y):
                    worst = max(worst, abs(x - y))
                same = _close(x, y, rtol, atol)
            else:
                same = cell_a == cell_b
            if not same:
                mismatches += 1
                first = first or f"row {i}, column {j}: {cell_a} vs {cell_b}"
    if not mismatches:
        return None
    return FileDiff(path=rel, kind="csv", mismatches=mismatches, max_abs_diff=worst, detail=first)


def _walk_json(a: Any, b: Any, where: str, rtol: float, atol: float, found: list) -> float:
    """Append differing leaf paths to ``found``; returns the largest numeric gap"""
    numeric = (int, float)
    if isinstance(a, bool) or isinstance(b, bool) or not (isinstance(a, numeric) and isinstance(b, numeric)):
        if isinstance(a, dict) and isinstance(b, dict):
            worst = 0.0
            for key in sorted(set(a) | set(b)):
                if key not in a or key not in b:
                    found.append(f"{where}.{key}")
                    continue
                worst = max(worst, _walk_json(a[key], b[key], f"{where}.{key}", rtol, atol, found))
            return worst
        if isinstance(a, list) and isinstance(b, list):
            if len(a) != len(b):
                found.append(f"{where} (length {len(a)} vs {len(b)})")
                return 0.0
            worst = 0.0
            for i, (x, y) in enumerate(zip(a, b)):
                worst = max(worst, _walk_json(x, y, f"{where}[{i}]", rtol, atol, found))
            return worst
        if a != b:
            found.append(where)
        return 0.0
    if not _close(float(a), float(b), rtol, atol):
        found.append(where)
    return abs(float(a) - float(b))


def _compare_json(path_a: Path, path_b: Path, rel: str, rtol: float, atol: float) -> Optional[FileDiff]:
    found: list[str] = []
    worst = _walk_json(read_json(path_a), read_json(path_b), "$", rtol, atol, found)
    if not found:
        return None
    return FileDiff(path=rel, kind="json", mismatches=len(found), max_abs_diff=worst, detail=found[0])


def _compare_text(path_a: Path, path_b: Path, rel: str) -> Optional[FileDiff]:
    try:
        lines_a = path_a.read_text(encoding="utf-8").splitlines()
        lines_b = path_b.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ArtifactError(f"cannot read {rel}: {exc.strerror}") from exc
    differing = sum(x != y for x, y in zip(lines_a, lines_b)) + abs(len(lines_a) - len(lines_b))
    if not differing:
        return None
    return FileDiff(path=rel, kind="text", mismatches=differing)


def _files(root: Path) -> set[str]:
    return {path.relative_to(root).as_posix() for path in root.rglob("*") if path.is_file()}


def compare_runs(
    dir_a: str | Path,
    dir_b: str | Path,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
) -> DiffReport:
    """Field-wise diff of two run directories; oracle and trace files reported apart"""
    rtol = settings.COMPARE_RTOL if rtol is None else rtol
    atol = settings.COMPARE_ATOL if atol is None else atol
    root_a, root_b = Path(dir_a), Path(dir_b)
    for root in (root_a, root_b):
        if not (root / "config.json").is_file():
            raise ArtifactError(f"{root} is not a run directory (config.json missing)")

    files_a, files_b = _files(root_a), _files(root_b)
    report = DiffReport(missing=sorted(files_a ^ files_b))
    for rel in sorted(files_a & files_b):
        if rel.endswith(".csv"):
            diff = _compare_csv(root_a / rel, root_b / rel, rel, rtol, atol)
        elif rel.endswith(".json"):
            diff = _compare_json(root_a / rel, root_b / rel, rel, rtol, atol)
        else:
            diff = _compare_text(root_a / rel, root_b / rel, rel)
        if diff is None:
            continue
        if rel.startswith("oracle/"):
            report.oracle.append(diff)
        elif rel.startswith("seeds/"):
            report.traces.append(diff)
        else:
            report.other.append(diff)
    logger.info(
        "compare: %d oracle, %d trace, %d other differences, %d unmatched files",
        len(report.oracle), len(report.traces), len(report.other), len(report.missing),
    )
    return report
