"""Matrix factorization model and top-K ranking."""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .constants import DEFAULT_INIT_SCALE
from .dataset import InteractionDataset

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class FactorModel:
    """User factors ``P`` (n_users x K) and item factors ``Q`` (n_items x K)."""

    P: np.ndarray
    Q: np.ndarray
    seed: Optional[int] = None
    loss: Optional[str] = None

    def __post_init__(self):
        if self.P.ndim != 2 or self.Q.ndim != 2 or self.P.shape[1] != self.Q.shape[1]:
            raise ValueError(f"Incompatible factor shapes {self.P.shape} and {self.Q.shape}")

    @property
    def latent_dim(self) -> int:
        return self.P.shape[1]

    @property
    def n_users(self) -> int:
        return self.P.shape[0]

    @property
    def n_items(self) -> int:
        return self.Q.shape[0]

    def copy(self) -> "FactorModel":
        return FactorModel(self.P.copy(), self.Q.copy(), seed=self.seed, loss=self.loss)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.P).all() and np.isfinite(self.Q).all())


def init_model(
    n_users: int,
    n_items: int,
    latent_dim: int,
    seed: int,
    scale: float = DEFAULT_INIT_SCALE,
    dtype=np.float32,
) -> FactorModel:
    """Zero-mean Gaussian initialization with standard deviation ``scale``."""
    rng = np.random.default_rng(seed)
    P = rng.normal(0.0, scale, size=(n_users, latent_dim)).astype(dtype)
    Q = rng.normal(0.0, scale, size=(n_items, latent_dim)).astype(dtype)
    return FactorModel(P, Q, seed=seed)


def score(model: FactorModel, user: int, item: int) -> float:
    return float(np.dot(model.P[user], model.Q[item]))


def scores(model: FactorModel, user: int, items=None) -> np.ndarray:
    """Scores of ``user`` for ``items`` (every item when omitted)."""
    Q = model.Q if items is None else model.Q[np.asarray(items)]
    return Q @ model.P[user]


def preference(model: FactorModel, users, positives, negatives):
    """Pairwise preference ``f = x_ui+ - x_ui-`` (vectorized over triples)."""
    P = model.P[users]
    diff = model.Q[positives] - model.Q[negatives]
    f = np.sum(P * diff, axis=-1)
    return float(f) if np.ndim(f) == 0 else f


def preference_probability(model: FactorModel, users, positives, negatives):
    return expit(preference(model, users, positives, negatives))


@dataclass
class RankedList:
    """Top-K items for one user, best first."""

    user: int
    items: np.ndarray
    scores: np.ndarray = field(repr=False)
    truncated: bool = False

    def __len__(self) -> int:
        return int(self.items.size)


def top_k(
    model: FactorModel,
    user: int,
    candidates,
    k_cut: int,
    exclude: Optional[InteractionDataset] = None,
) -> RankedList:
    """Rank ``candidates`` by score descending, ties broken by item index ascending.

    Args:
        model: Trained factors
        user: Dense user index
        candidates: Distinct item indices to rank
        k_cut: List length; shorter candidate sets yield a truncated list
        exclude: Dataset whose positives of ``user`` must not be candidates

    Raises:
        ValueError: On empty or repeated candidates, or candidates that are
            positives of ``exclude``
    """
    items = np.asarray(candidates, dtype=np.int64)
    if items.size == 0:
        raise ValueError("Candidate set is empty")
    if np.unique(items).size != items.size:
        raise ValueError("Candidate items must be distinct")
    if exclude is not None and np.isin(items, exclude.positives(user)).any():
        raise ValueError(f"Candidates of user {user} include training positives")

    values = scores(model, user, items)
    order = np.lexsort((items, -values))[:k_cut]
    truncated = items.size < k_cut
    if truncated:
        logger.warning("Only %d candidates for user %d, wanted %d", items.size, user, k_cut)
    return RankedList(user=user, items=items[order], scores=values[order], truncated=truncated)


def recommend(
    model: FactorModel, user: int, train: InteractionDataset, k_cut: int
) -> RankedList:
    """Top-K over the whole catalogue minus the user's training positives."""
    candidates = np.setdiff1d(np.arange(model.n_items), train.positives(user))
    return top_k(model, user, candidates, k_cut)
