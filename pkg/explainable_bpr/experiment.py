"""Experiment protocol: search, merged retraining, replicates, sweeps."""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import (
    BATCH_SIZE_GRID,
    DEFAULT_ETA,
    DEFAULT_REPLICATES,
    DEFAULT_SEARCH_CONFIGS,
    DEFAULT_SEARCH_REPLICATES,
    DEFAULT_SPARSITY_THRESHOLDS,
    DEFAULT_SWEEP_ETAS,
    L2_GRID,
    LATENT_DIM_GRID,
)
from .dataset import InteractionDataset, LooSplit, dataset_stats, filter_min_item_interactions
from .evaluation import evaluate_model
from .explainability import (
    ExplainabilityMatrix,
    ItemNeighborhoods,
    average_explainability,
    build_explainability,
    build_neighborhoods,
)
from .model import FactorModel
from .propensity import PropensityModel, build_propensity
from .schemas import EvalReport, LossKind, ReplicateSummary, TrainingConfig
from .training import TrainingHistory, train

logger = logging.getLogger(__name__)

Trainer = Callable[..., Tuple[FactorModel, TrainingHistory]]
Evaluator = Callable[..., EvalReport]

# ==========================================
# PRECOMPUTED INPUTS
# ==========================================


@dataclass(frozen=True, eq=False)
class PhaseInputs:
    """Neighborhoods, E and propensities computed from one dataset."""

    neighborhoods: ItemNeighborhoods
    explainability: ExplainabilityMatrix
    propensity: PropensityModel


def phase_inputs(
    ds: InteractionDataset,
    eta: int,
    variant: str = "neighbor_sum",
    floor: Optional[float] = None,
    source: str = "training",
) -> PhaseInputs:
    neighborhoods = build_neighborhoods(ds, eta)
    kwargs = {} if floor is None else {"floor": floor}
    return PhaseInputs(
        neighborhoods=neighborhoods,
        explainability=build_explainability(ds, neighborhoods, source=source),
        propensity=build_propensity(ds, neighborhoods, variant, **kwargs),
    )


@dataclass(frozen=True, eq=False)
class ExperimentInputs:
    """Training-phase and evaluation-phase inputs of one split at one eta."""

    training: PhaseInputs
    evaluation: PhaseInputs

    @classmethod
    def for_split(cls, split: LooSplit, config: TrainingConfig) -> "ExperimentInputs":
        """Training inputs from ``split.train``; evaluation E from ``split.full``.

        Evaluation reuses the training propensities so metrics never see
        held-out popularity.
        """
        training = phase_inputs(
            split.train, config.eta, config.propensity_variant, config.propensity_floor
        )
        neighborhoods = build_neighborhoods(split.full, config.eta)
        evaluation = PhaseInputs(
            neighborhoods=neighborhoods,
            explainability=build_explainability(split.full, neighborhoods, source="evaluation"),
            propensity=training.propensity,
        )
        return cls(training=training, evaluation=evaluation)


# ==========================================
# HYPERPARAMETER SEARCH
# ==========================================


def configuration_grid(
    latent_dims: Sequence[int] = LATENT_DIM_GRID,
    batch_sizes: Sequence[int] = BATCH_SIZE_GRID,
    l2_values: Sequence[float] = L2_GRID,
) -> List[Dict[str, float]]:
    return [
        {"latent_dim": k, "batch_size": b, "l2": l2}
        for k, b, l2 in itertools.product(latent_dims, batch_sizes, l2_values)
    ]


@dataclass
class SearchTrial:
    config: TrainingConfig
    scores: List[float]
    best_epochs: List[int]

    @property
    def mean_score(self) -> float:
        return float(np.mean(self.scores))


@dataclass
class SearchResult:
    best_config: TrainingConfig
    best_epoch: int
    trials: List[SearchTrial] = field(default_factory=list)


def replicate_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def hyperparameter_search(
    split: LooSplit,
    base_config: TrainingConfig,
    n_configs: int = DEFAULT_SEARCH_CONFIGS,
    replicates: int = DEFAULT_SEARCH_REPLICATES,
    seed: int = 0,
    E: Optional[ExplainabilityMatrix] = None,
    propensity: Optional[PropensityModel] = None,
    grid: Optional[List[Dict[str, float]]] = None,
    trainer: Trainer = train,
) -> SearchResult:
    """Random search over the grid product, scored by mean validation NDCG.

    Args:
        split: Split with a validation holdout
        base_config: Loss kind and every setting not searched
        n_configs: Configurations sampled without replacement
        replicates: Training runs per configuration, each with its own seed
        seed: Search seed (configuration sampling and replicate seeds)
        E: Training-phase explainability matrix
        propensity: Training-phase propensities
        grid: Candidate overrides (default: latent dim x batch size x L2)
        trainer: Training function, ``train`` unless stubbed

    Returns:
        Best configuration, the median of its replicates' best epochs (rounded up)
        and every trial
    """
    grid = grid if grid is not None else configuration_grid()
    if len(grid) < n_configs:
        logger.warning("Grid has %d configurations, fewer than %d requested", len(grid), n_configs)
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(grid), size=min(n_configs, len(grid)), replace=False)

    trials: List[SearchTrial] = []
    for index, position in enumerate(picked):
        scores, epochs = [], []
        for replicate in range(replicates):
            config = base_config.model_copy(
                update={**grid[position], "seed": replicate_seed(seed, index, replicate)}
            )
            _, history = trainer(split, config, E, propensity)
            scores.append(history.best_ndcg)
            epochs.append(history.best_epoch)
        trial = SearchTrial(
            config=base_config.model_copy(update=grid[position]), scores=scores, best_epochs=epochs
        )
        trials.append(trial)
        logger.info("Config %d %s: validation NDCG %.4f", index, grid[position], trial.mean_score)

    best = max(trials, key=lambda trial: trial.mean_score)
    logger.info("Best configuration: %s", best.config.model_dump(mode="json"))
    best_epoch = int(np.ceil(np.median(best.best_epochs)))
    return SearchResult(best_config=best.config, best_epoch=best_epoch, trials=trials)


def retrain_merged(
    split: LooSplit,
    config: TrainingConfig,
    best_epoch: int,
    E: Optional[ExplainabilityMatrix] = None,
    propensity: Optional[PropensityModel] = None,
    trainer: Trainer = train,
) -> Tuple[FactorModel, TrainingHistory]:
    """Train on train + validation for exactly ``best_epoch`` epochs.

    ``E`` and ``propensity`` should be computed from the merged training data.
    """
    merged = split.merged()
    config = config.model_copy(update={"max_epochs": max(best_epoch, 1), "early_stopping": False})
    return trainer(merged, config, E, propensity)


# ==========================================
# REPLICATES AND SWEEPS
# ==========================================


def summarize(reports: List[EvalReport], loss: Optional[str] = None) -> ReplicateSummary:
    """Per-metric mean and population standard deviation."""
    names = sorted({name for report in reports for name in report.metrics})
    values = {name: np.asarray([r.metrics[name] for r in reports]) for name in names}
    return ReplicateSummary(
        loss=loss,
        protocol=reports[0].protocol,
        cutoff=reports[0].cutoff,
        n=len(reports),
        mean={name: float(v.mean()) for name, v in values.items()},
        std={name: float(v.std()) for name, v in values.items()},
        reports=reports,
    )


def run_replicates(
    split: LooSplit,
    config: TrainingConfig,
    n: int = DEFAULT_REPLICATES,
    inputs: Optional[ExperimentInputs] = None,
    best_epoch: Optional[int] = None,
    trainer: Trainer = train,
    evaluator: Evaluator = evaluate_model,
) -> ReplicateSummary:
    """Train and evaluate ``n`` models with seeds ``config.seed + r``.

    With ``best_epoch`` set, each replicate is a merged retrain; training inputs
    are then recomputed on the merged training data.
    """
    inputs = inputs or ExperimentInputs.for_split(split, config)
    training = inputs.training
    if best_epoch is not None:
        training = phase_inputs(
            split.merged().train, config.eta, config.propensity_variant, config.propensity_floor
        )

    reports: List[EvalReport] = []
    loss = LossKind(config.loss).value
    for replicate in range(n):
        run_config = config.model_copy(update={"seed": config.seed + replicate})
        if best_epoch is None:
            model, _ = trainer(split, run_config, training.explainability, training.propensity)
        else:
            model, _ = retrain_merged(
                split,
                run_config,
                best_epoch,
                training.explainability,
                training.propensity,
                trainer=trainer,
            )
        reports.append(
            evaluator(
                model,
                split,
                inputs.evaluation.explainability,
                inputs.evaluation.propensity,
                k_cut=config.cutoff,
                loss=loss,
            )
        )
    return summarize(reports, loss=loss)


def sweep_eta(
    split: LooSplit,
    config: TrainingConfig,
    etas: Sequence[int] = DEFAULT_SWEEP_ETAS,
    n: int = DEFAULT_REPLICATES,
    trainer: Trainer = train,
    evaluator: Evaluator = evaluate_model,
) -> Dict[int, ReplicateSummary]:
    """Replicate summaries per neighborhood size, recomputing E and propensities."""
    results: Dict[int, ReplicateSummary] = {}
    for eta in etas:
        eta_config = config.model_copy(update={"eta": eta})
        inputs = ExperimentInputs.for_split(split, eta_config)
        results[eta] = run_replicates(
            split, eta_config, n, inputs=inputs, trainer=trainer, evaluator=evaluator
        )
        logger.info("eta=%d: %s", eta, results[eta].mean)
    return results


@dataclass
class SparsityRow:
    threshold: int
    users: int
    items: int
    interactions: int
    sparsity: float
    average_explainability: float


def sparsity_study(
    ds: InteractionDataset,
    thresholds: Sequence[int] = DEFAULT_SPARSITY_THRESHOLDS,
    eta: int = DEFAULT_ETA,
) -> List[SparsityRow]:
    """Full-data average explainability after each item-frequency filter.

    Higher thresholds drop rare items, so the remaining data gets denser.
    """
    rows: List[SparsityRow] = []
    for threshold in thresholds:
        filtered = filter_min_item_interactions(ds, threshold)
        stats = dataset_stats(filtered)
        neighborhoods = build_neighborhoods(filtered, eta)
        E = build_explainability(filtered, neighborhoods, source="evaluation")
        rows.append(
            SparsityRow(
                threshold=threshold,
                users=stats.users,
                items=stats.items,
                interactions=stats.interactions,
                sparsity=stats.sparsity,
                average_explainability=average_explainability(E, filtered),
            )
        )
        logger.info(
            "threshold=%d sparsity=%.4f average E=%.4f",
            threshold,
            stats.sparsity,
            rows[-1].average_explainability,
        )
    return rows
