"""Instance weights, the weighted pairwise loss and mini-batch SGD."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from .dataset import LooSplit, Triples, sample_training_triples
from .errors import ConfigurationError, NumericError
from .evaluation import evaluate_ranking
from .explainability import ExplainabilityMatrix
from .model import FactorModel, init_model, preference
from .propensity import PropensityModel
from .schemas import LossKind, TrainingConfig

logger = logging.getLogger(__name__)

TripleArrays = Union[Triples, Tuple[np.ndarray, np.ndarray, np.ndarray]]

# ==========================================
# WEIGHTS
# ==========================================


def check_inputs(
    kind: LossKind,
    E: Optional[ExplainabilityMatrix],
    propensity: Optional[PropensityModel],
) -> None:
    """Raise when ``kind`` needs precomputed inputs that were not supplied."""
    kind = LossKind(kind)
    if kind.needs_explainability and E is None:
        raise ConfigurationError(
            f"{kind.value} requires an explainability matrix",
            code="MISSING_EXPLAINABILITY",
        )
    if kind.needs_propensity and propensity is None:
        raise ConfigurationError(
            f"{kind.value} requires propensity estimates", code="MISSING_PROPENSITY"
        )


def instance_weight(
    kind: LossKind,
    users,
    positives,
    negatives,
    E: Optional[ExplainabilityMatrix] = None,
    propensity: Optional[PropensityModel] = None,
    weight_clip: bool = False,
):
    """Per-triple weight of the pairwise loss.

    Scalar inputs return a float; array inputs return an array.

    Raises:
        ConfigurationError: If ``kind`` needs E or propensities that are missing
    """
    kind = LossKind(kind)
    check_inputs(kind, E, propensity)
    scalar = np.ndim(users) == 0
    users = np.atleast_1d(np.asarray(users, dtype=np.int64))
    positives = np.atleast_1d(np.asarray(positives, dtype=np.int64))
    negatives = np.atleast_1d(np.asarray(negatives, dtype=np.int64))

    if kind is LossKind.BPR:
        weights = np.ones(users.size)
    else:
        if kind.needs_explainability:
            e_pos = E.lookup(users, positives)
            e_neg = E.lookup(users, negatives)
        if kind is LossKind.UBPR:
            weights = 1.0 / propensity.item_denominator(positives)
        elif kind is LossKind.EBPR:
            weights = e_pos * (1.0 - e_neg)
        elif kind is LossKind.PUEBPR:
            weights = (1.0 / propensity.item_denominator(positives)) * e_pos * (1.0 - e_neg)
        else:
            inverse = 1.0 / propensity.item_denominator(positives)
            pos_term = e_pos / propensity.neighborhood_denominator(positives)
            neg_term = 1.0 - e_neg / propensity.neighborhood_denominator(negatives)
            weights = inverse * pos_term * neg_term

    if weight_clip:
        weights = np.clip(weights, 0.0, 1.0)
    return float(weights[0]) if scalar else weights


# ==========================================
# LOSS AND GRADIENT
# ==========================================


def _unpack(triples: TripleArrays):
    if isinstance(triples, Triples):
        return triples.users, triples.positives, triples.negatives
    return triples


def triple_loss(model: FactorModel, triples: TripleArrays, weights):
    """Weighted ``-log sigmoid(f)``, computed stably as ``w * log(1 + exp(-f))``."""
    users, positives, negatives = _unpack(triples)
    f = np.asarray(preference(model, users, positives, negatives), dtype=np.float64)
    loss = np.asarray(weights, dtype=np.float64) * np.logaddexp(0.0, -f)
    return float(loss) if np.ndim(loss) == 0 else loss


@dataclass
class TripleGradient:
    """Row gradients for the users and items touched by a set of triples."""

    users: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    user_grad: np.ndarray
    positive_grad: np.ndarray
    negative_grad: np.ndarray


def triple_gradient(
    model: FactorModel, triples: TripleArrays, weights, l2: float = 0.0
) -> TripleGradient:
    """Gradient of ``triple_loss`` plus ``l2 / 2`` times the squared norms of touched rows.

    Triples with zero weight contribute nothing, not even regularization.
    """
    users, positives, negatives = (np.atleast_1d(a) for a in _unpack(triples))
    weights = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    P = model.P[users].astype(np.float64)
    Qp = model.Q[positives].astype(np.float64)
    Qn = model.Q[negatives].astype(np.float64)
    f = np.sum(P * (Qp - Qn), axis=1)
    g = (-weights * expit(-f))[:, None]

    user_grad = g * (Qp - Qn)
    positive_grad = g * P
    negative_grad = -g * P
    if l2:
        active = (weights != 0)[:, None]
        user_grad += l2 * active * P
        positive_grad += l2 * active * Qp
        negative_grad += l2 * active * Qn
    return TripleGradient(users, positives, negatives, user_grad, positive_grad, negative_grad)


def apply_gradient(model: FactorModel, gradient: TripleGradient, learning_rate: float) -> None:
    """In-place SGD step; gradients of repeated rows are summed."""
    dtype = model.P.dtype
    np.add.at(model.P, gradient.users, (-learning_rate * gradient.user_grad).astype(dtype))
    np.add.at(model.Q, gradient.positives, (-learning_rate * gradient.positive_grad).astype(dtype))
    np.add.at(model.Q, gradient.negatives, (-learning_rate * gradient.negative_grad).astype(dtype))


# ==========================================
# TRAINING LOOP
# ==========================================


@dataclass
class TrainingHistory:
    """Per-epoch training loss and validation metrics."""

    losses: List[float] = field(default_factory=list)
    validation_ndcg: List[float] = field(default_factory=list)
    validation_hr: List[float] = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.losses)

    @property
    def best_epoch(self) -> int:
        """Number of epochs that produced the best validation NDCG (first on ties)."""
        if not self.validation_ndcg:
            return self.epochs
        return int(np.argmax(self.validation_ndcg)) + 1

    @property
    def best_ndcg(self) -> float:
        return max(self.validation_ndcg) if self.validation_ndcg else float("nan")


def epoch_seed(seed: int, epoch: int) -> int:
    """Independent sampling seed for one epoch of a run."""
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def _check_rows(model: FactorModel, batch: Triples, epoch: int, index: int) -> None:
    touched = np.concatenate([batch.positives, batch.negatives])
    if np.isfinite(model.P[batch.users]).all() and np.isfinite(model.Q[touched]).all():
        return
    raise NumericError(
        f"Non-finite parameters after epoch {epoch} batch {index}",
        code="NON_FINITE_PARAMETERS",
        details={"epoch": epoch, "batch": index},
    )


def _run_batch(model, triples, weights, batch_index, config, epoch, index) -> float:
    batch_weights = weights[batch_index]
    active = batch_index[batch_weights != 0]
    if active.size == 0:
        return 0.0
    batch = triples.take(active)
    batch_weights = weights[active]
    loss = float(np.sum(triple_loss(model, batch, batch_weights)))
    gradient = triple_gradient(model, batch, batch_weights, config.l2)
    apply_gradient(model, gradient, config.learning_rate)
    _check_rows(model, batch, epoch, index)
    return loss


def run_epoch(
    model: FactorModel,
    triples: Triples,
    weights: np.ndarray,
    config: TrainingConfig,
    epoch: int,
    seed: int,
) -> float:
    """Shuffle, then one SGD step per mini-batch; returns the mean weighted loss."""
    order = np.random.default_rng([seed, 1]).permutation(len(triples))
    batches = [order[s : s + config.batch_size] for s in range(0, order.size, config.batch_size)]

    def step(index: int) -> float:
        return _run_batch(model, triples, weights, batches[index], config, epoch, index)

    if config.deterministic or config.n_workers == 1:
        total = sum(step(index) for index in range(len(batches)))
    else:
        # Lock-free updates: concurrent batches may overwrite each other's rows.
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            total = sum(pool.map(step, range(len(batches))))
    return total / max(len(triples), 1)


def train(
    split: LooSplit,
    config: TrainingConfig,
    E: Optional[ExplainabilityMatrix] = None,
    propensity: Optional[PropensityModel] = None,
    on_epoch: Optional[Callable[[int, float, Optional[float]], None]] = None,
) -> Tuple[FactorModel, TrainingHistory]:
    """Train a factor model on ``split.train`` with the configured loss.

    Each epoch draws one triple per training positive with negatives outside
    the user's full positives. With a validation holdout, the best-NDCG snapshot
    is returned and training stops after ``patience`` epochs without
    improvement (when ``early_stopping`` is set).

    Args:
        split: Leave-one-out split (merged splits train without validation)
        config: Hyperparameters and seed
        E: Training-phase explainability matrix for E-weighted losses
        propensity: Training-phase propensities for debiased losses
        on_epoch: Called with ``(epoch, loss, validation_ndcg)`` after each epoch

    Returns:
        Best model and the per-epoch history

    Raises:
        ConfigurationError: If the loss needs E or propensities not supplied
        NumericError: If parameters become non-finite
    """
    check_inputs(config.loss, E, propensity)
    model = init_model(split.n_users, split.n_items, config.latent_dim, config.seed)
    model.loss = LossKind(config.loss).value
    history = TrainingHistory()
    best: Optional[FactorModel] = None
    stale = 0

    for epoch in range(1, config.max_epochs + 1):
        seed = epoch_seed(config.seed, epoch)
        triples = sample_training_triples(split.train, seed, exclude=split.full)
        weights = instance_weight(
            config.loss,
            triples.users,
            triples.positives,
            triples.negatives,
            E,
            propensity,
            config.weight_clip,
        )
        loss = run_epoch(model, triples, weights, config, epoch, seed)
        history.losses.append(loss)

        ndcg = None
        if split.has_validation:
            hr, ndcg = evaluate_ranking(model, split, config.cutoff, holdout="validation")
            history.validation_hr.append(hr)
            history.validation_ndcg.append(ndcg)
            if best is None or ndcg > max(history.validation_ndcg[:-1]):
                best = model.copy()
                stale = 0
            else:
                stale += 1
        logger.debug("epoch %d loss=%.6f val_ndcg=%s", epoch, loss, ndcg)
        if on_epoch is not None:
            on_epoch(epoch, loss, ndcg)
        if config.early_stopping and split.has_validation and stale >= config.patience:
            logger.info("Early stop at epoch %d (best %d)", epoch, history.best_epoch)
            break

    logger.info(
        "Trained %s seed=%d for %d epochs", model.loss, config.seed, history.epochs
    )
    return (best if best is not None else model), history
