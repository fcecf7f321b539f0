"""Ranking, explainability and popularity metrics."""

import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .constants import DEFAULT_CUTOFF, DEFAULT_RELEVANCE_THRESHOLD, DEFAULT_UNBIASED_CUTOFF
from .dataset import InteractionDataset, LooSplit
from .explainability import ExplainabilityMatrix
from .model import FactorModel, RankedList
from .propensity import PropensityModel
from .schemas import EvalReport

logger = logging.getLogger(__name__)

# ==========================================
# LEAVE-ONE-OUT RANKING
# ==========================================


def _candidate_scores(model: FactorModel, candidates: np.ndarray) -> np.ndarray:
    users = np.arange(candidates.shape[0])
    return np.einsum("uk,uck->uc", model.P[users], model.Q[candidates])


def holdout_ranks(model: FactorModel, split: LooSplit, holdout: str = "test") -> np.ndarray:
    """1-based rank of each user's held-out item among its candidates.

    Equal scores are ordered by item index ascending, as in ``top_k``.
    """
    candidates = split.candidates(holdout)
    values = _candidate_scores(model, candidates)
    target = values[:, :1]
    target_items = candidates[:, :1]
    ahead = (values > target) | ((values == target) & (candidates < target_items))
    return 1 + ahead.sum(axis=1)


def evaluate_ranking(
    model: FactorModel, split: LooSplit, k_cut: int = DEFAULT_CUTOFF, holdout: str = "test"
) -> Tuple[float, float]:
    """Mean HR@K and NDCG@K over users.

    Returns:
        ``(hr, ndcg)``
    """
    ranks = holdout_ranks(model, split, holdout)
    hit = ranks <= k_cut
    ndcg = np.where(hit, 1.0 / np.log2(1.0 + ranks), 0.0)
    return float(np.mean(hit)), float(np.mean(ndcg))


def candidate_top_k(
    model: FactorModel, split: LooSplit, k_cut: int = DEFAULT_CUTOFF, holdout: str = "test"
) -> List[RankedList]:
    """Top-K list of every user over its leave-one-out candidates."""
    candidates = split.candidates(holdout)
    values = _candidate_scores(model, candidates)
    order = np.lexsort((candidates, -values), axis=-1)[:, :k_cut]
    items = np.take_along_axis(candidates, order, axis=1)
    top_scores = np.take_along_axis(values, order, axis=1)
    truncated = candidates.shape[1] < k_cut
    return [
        RankedList(user=u, items=items[u], scores=top_scores[u], truncated=truncated)
        for u in range(candidates.shape[0])
    ]


# ==========================================
# EXPLAINABILITY AND POPULARITY
# ==========================================


def evaluate_explainability(
    topk: Sequence[RankedList], E: ExplainabilityMatrix, k_cut: int = DEFAULT_CUTOFF
) -> Tuple[float, float]:
    """Mean explainability precision and its E-weighted form.

    Returns:
        ``(mep, wmep)``
    """
    if not topk:
        return 0.0, 0.0
    mep = np.empty(len(topk))
    wmep = np.empty(len(topk))
    for index, ranked in enumerate(topk):
        items = ranked.items[:k_cut]
        values = E.lookup(np.full(items.size, ranked.user), items)
        mep[index] = np.count_nonzero(values) / k_cut
        wmep[index] = values.sum() / k_cut
    return float(mep.mean()), float(wmep.mean())


def list_diversity(items: np.ndarray, ds: InteractionDataset) -> float:
    """Pairwise cosine sum of a list normalized by ``K (K - 1)``."""
    k = items.size
    if k < 2:
        return 0.0
    columns = ds.item_matrix()[:, items]
    gram = (columns.T @ columns).toarray()
    counts = np.diag(gram).copy()
    norms = np.sqrt(np.outer(counts, counts))
    with np.errstate(divide="ignore", invalid="ignore"):
        cosine = np.where(norms > 0, gram / norms, 0.0)
    upper = np.triu_indices(k, 1)
    return float(np.minimum(cosine[upper], 1.0).sum()) / (k * (k - 1))


def evaluate_popularity(
    topk: Sequence[RankedList],
    propensity: PropensityModel,
    ds: InteractionDataset,
    k_cut: int = DEFAULT_CUTOFF,
) -> Tuple[float, float, float]:
    """Novelty, popularity and similarity of recommended lists.

    Returns:
        ``(efd, avg_pop, div)``
    """
    if not topk:
        return 0.0, 0.0, 0.0
    efd = np.empty(len(topk))
    avg_pop = np.empty(len(topk))
    div = np.empty(len(topk))
    for index, ranked in enumerate(topk):
        items = ranked.items[:k_cut]
        theta = np.asarray(propensity.item_denominator(items), dtype=np.float64)
        efd[index] = -np.log2(theta).sum() / k_cut
        avg_pop[index] = theta.sum() / k_cut
        div[index] = list_diversity(items, ds)
    return float(efd.mean()), float(avg_pop.mean()), float(div.mean())


# ==========================================
# PROTOCOLS
# ==========================================


def evaluate_model(
    model: FactorModel,
    split: LooSplit,
    E: ExplainabilityMatrix,
    propensity: PropensityModel,
    k_cut: int = DEFAULT_CUTOFF,
    loss: Optional[str] = None,
) -> EvalReport:
    """Every leave-one-out metric for one model.

    ``E`` should be the evaluation-phase matrix and ``propensity`` the one
    estimated on training data.
    """
    hr, ndcg = evaluate_ranking(model, split, k_cut)
    topk = candidate_top_k(model, split, k_cut)
    mep, wmep = evaluate_explainability(topk, E, k_cut)
    efd, avg_pop, div = evaluate_popularity(topk, propensity, split.full, k_cut)
    return EvalReport(
        protocol="loo_101",
        cutoff=k_cut,
        loss=loss or model.loss,
        seed=model.seed,
        metrics={
            "hr": hr,
            "ndcg": ndcg,
            "mep": mep,
            "wmep": wmep,
            "efd": efd,
            "avg_pop": avg_pop,
            "div": div,
        },
    )


def average_precision(relevant: np.ndarray, k_cut: int) -> float:
    """AP@K of a ranked relevance vector, normalized by ``min(#relevant, K)``."""
    n_relevant = int(relevant.sum())
    if n_relevant == 0:
        return 0.0
    head = relevant[:k_cut].astype(np.float64)
    precision = np.cumsum(head) / np.arange(1, head.size + 1)
    return float((precision * head).sum()) / min(n_relevant, k_cut)


def ndcg_at_k(relevant: np.ndarray, k_cut: int) -> float:
    n_relevant = int(relevant.sum())
    if n_relevant == 0:
        return 0.0
    head = relevant[:k_cut].astype(np.float64)
    discounts = 1.0 / np.log2(np.arange(2, k_cut + 2))
    dcg = float((head * discounts[: head.size]).sum())
    idcg = float(discounts[: min(n_relevant, k_cut)].sum())
    return dcg / idcg


def evaluate_unbiased_testset(
    model: FactorModel,
    testset: Mapping[int, Sequence[Tuple[int, float]]],
    k_cut: int = DEFAULT_UNBIASED_CUTOFF,
    relevance_threshold: float = DEFAULT_RELEVANCE_THRESHOLD,
) -> EvalReport:
    """MAP@K and NDCG@K over users' randomly assigned rated items.

    Each user's rated items are ranked by score; ratings at or above
    ``relevance_threshold`` are relevant. Users without a relevant item are
    left out of the mean and counted in ``excluded_users``.
    """
    ap_values: List[float] = []
    ndcg_values: List[float] = []
    excluded = 0
    for user in sorted(testset):
        rated = testset[user]
        items = np.asarray([item for item, _ in rated], dtype=np.int64)
        ratings = np.asarray([rating for _, rating in rated], dtype=np.float64)
        relevant = ratings >= relevance_threshold
        if not relevant.any():
            excluded += 1
            continue
        values = model.Q[items] @ model.P[user]
        order = np.lexsort((items, -values))
        ap_values.append(average_precision(relevant[order], k_cut))
        ndcg_values.append(ndcg_at_k(relevant[order], k_cut))

    if excluded:
        logger.info("Excluded %d users without relevant test items", excluded)
    metrics: Dict[str, float] = {
        "map": float(np.mean(ap_values)) if ap_values else 0.0,
        "ndcg": float(np.mean(ndcg_values)) if ndcg_values else 0.0,
    }
    return EvalReport(
        protocol="unbiased_testset",
        cutoff=k_cut,
        loss=model.loss,
        seed=model.seed,
        metrics=metrics,
        excluded_users=excluded,
    )
