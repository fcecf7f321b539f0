"""Item neighborhoods and the user-item explainability matrix.

E_ui is the fraction of item i's eta most cosine-similar items that user u has
interacted with. Neighborhoods and E are always computed from a single phase's
data: the training part of a split while training, the full data when
evaluating.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix

from .dataset import InteractionDataset, LooSplit
from .schemas import Explanation, ExplanationNeighbor, Phase

logger = logging.getLogger(__name__)

# ==========================================
# ITEM SIMILARITY
# ==========================================


def cosine_item_similarity(ds: InteractionDataset, i: int, j: int) -> float:
    """Cosine similarity of two items' binary user columns (0 if either is empty)."""
    users_i = ds.item_users(i)
    users_j = ds.item_users(j)
    if users_i.size == 0 or users_j.size == 0:
        return 0.0
    common = np.intersect1d(users_i, users_j, assume_unique=True).size
    value = float(common) / np.sqrt(float(users_i.size) * float(users_j.size))
    return float(min(value, 1.0))


def _cooccurrence(ds: InteractionDataset) -> csr_matrix:
    X = ds.matrix()
    co = (X.T @ X).tocsr()
    co.sort_indices()
    return co


def similarity_matrix(ds: InteractionDataset) -> csr_matrix:
    """Sparse item x item cosine matrix; only co-occurring pairs are stored."""
    co = _cooccurrence(ds)
    counts = ds.item_counts().astype(np.float64)
    rows = np.repeat(np.arange(ds.n_items), np.diff(co.indptr))
    data = co.data / np.sqrt(counts[rows] * counts[co.indices])
    return csr_matrix((np.minimum(data, 1.0), co.indices, co.indptr), shape=co.shape)


# ==========================================
# NEIGHBORHOODS
# ==========================================


@dataclass(frozen=True, eq=False)
class ItemNeighborhoods:
    """Top-eta neighbors of every item, stored row-compressed.

    Neighbors of item ``i`` are ``indices[indptr[i]:indptr[i + 1]]``, ordered by
    similarity descending then item index ascending. Zero-similarity items are
    never neighbors, so a row may hold fewer than ``eta`` entries.
    """

    eta: int
    indptr: np.ndarray
    indices: np.ndarray
    similarities: np.ndarray

    @property
    def n_items(self) -> int:
        return len(self.indptr) - 1

    def neighbor_items(self, item: int) -> np.ndarray:
        return self.indices[self.indptr[item] : self.indptr[item + 1]]

    def neighbors(self, item: int) -> List[Tuple[int, float]]:
        start, end = self.indptr[item], self.indptr[item + 1]
        return list(zip(self.indices[start:end].tolist(), self.similarities[start:end].tolist()))

    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def membership(self) -> csr_matrix:
        """Binary item x item matrix M with M[i, l] = 1 iff l is a neighbor of i."""
        data = np.ones(self.indices.size, dtype=np.float64)
        return csr_matrix(
            (data, self.indices, self.indptr), shape=(self.n_items, self.n_items)
        )


def _top_neighbors(
    cols: np.ndarray, common: np.ndarray, sizes: np.ndarray, sims: np.ndarray, eta: int
) -> np.ndarray:
    """Positions of the ``eta`` most similar columns, ties broken by item index.

    Within one row the cosine orders like common**2 / size, so candidates near the
    cutoff are ranked on that exact fraction rather than on rounded floats.
    """
    if cols.size > eta:
        cutoff = np.partition(sims, cols.size - eta)[cols.size - eta]
        candidates = np.flatnonzero(sims >= cutoff * (1.0 - 1e-9))
    else:
        candidates = np.arange(cols.size)

    def key(position: int):
        return (-Fraction(int(common[position]) ** 2, int(sizes[position])), int(cols[position]))

    return np.asarray(sorted(candidates.tolist(), key=key)[:eta], dtype=np.int64)


def build_neighborhoods(ds: InteractionDataset, eta: int) -> ItemNeighborhoods:
    """Select each item's ``eta`` most similar other items.

    Raises:
        ValueError: If ``eta`` < 1
    """
    if eta < 1:
        raise ValueError(f"eta must be >= 1, got {eta}")
    co = _cooccurrence(ds)
    counts = ds.item_counts()
    indptr = np.zeros(ds.n_items + 1, dtype=np.int64)
    chosen_items = []
    chosen_sims = []
    for item in range(ds.n_items):
        start, end = co.indptr[item], co.indptr[item + 1]
        cols = co.indices[start:end]
        common = np.rint(co.data[start:end]).astype(np.int64)
        keep = (cols != item) & (common > 0)
        cols, common = cols[keep], common[keep]
        sims = np.minimum(common / np.sqrt(float(counts[item]) * counts[cols]), 1.0)
        order = _top_neighbors(cols, common, counts[cols], sims, eta)
        chosen_items.append(cols[order])
        chosen_sims.append(sims[order])
        indptr[item + 1] = indptr[item] + order.size

    indices = np.concatenate(chosen_items) if chosen_items else np.zeros(0, dtype=np.int64)
    similarities = np.concatenate(chosen_sims) if chosen_sims else np.zeros(0)
    short = int((np.diff(indptr) < eta).sum())
    if short:
        logger.debug("%d items have fewer than %d neighbors", short, eta)
    return ItemNeighborhoods(
        eta=eta,
        indptr=indptr,
        indices=indices.astype(np.int64),
        similarities=similarities.astype(np.float64),
    )


# ==========================================
# EXPLAINABILITY MATRIX
# ==========================================


@dataclass(frozen=True, eq=False)
class ExplainabilityMatrix:
    """Sparse explainability values kept as integer neighbor counts.

    ``counts[u, i]`` is the number of i's neighbors u interacted with, so
    ``E_ui = counts[u, i] / eta``.
    """

    counts: csr_matrix
    eta: int
    source: str = "training"

    @property
    def shape(self) -> Tuple[int, int]:
        return self.counts.shape

    @property
    def nnz(self) -> int:
        return int(self.counts.nnz)

    @cached_property
    def _keys(self) -> Tuple[np.ndarray, np.ndarray]:
        counts = self.counts.tocsr()
        counts.sort_indices()
        rows = np.repeat(np.arange(counts.shape[0]), np.diff(counts.indptr))
        return rows * counts.shape[1] + counts.indices, counts.data / self.eta

    def value(self, user: int, item: int) -> float:
        return float(self.lookup(np.asarray([user]), np.asarray([item]))[0])

    def lookup(self, users, items) -> np.ndarray:
        """E values for parallel arrays of users and items (0 where not stored)."""
        keys, values = self._keys
        queries = np.asarray(users, dtype=np.int64) * self.shape[1] + np.asarray(
            items, dtype=np.int64
        )
        if keys.size == 0:
            return np.zeros(queries.shape)
        position = np.minimum(np.searchsorted(keys, queries), keys.size - 1)
        return np.where(keys[position] == queries, values[position], 0.0)

    def dense(self) -> np.ndarray:
        return self.counts.toarray() / self.eta

    def triples(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nonzero (user, item, E) entries in row-major order."""
        keys, values = self._keys
        users, items = np.divmod(keys, self.shape[1])
        return users, items, values


def explainability_from_matrix(Y, neighborhoods: ItemNeighborhoods, source: str = "training"):
    """E computed from an arbitrary binary user x item matrix ``Y``."""
    counts = (csr_matrix(Y, dtype=np.float64) @ neighborhoods.membership.T).tocsr()
    counts.eliminate_zeros()
    counts.data = np.rint(counts.data)
    return ExplainabilityMatrix(counts=counts, eta=neighborhoods.eta, source=source)


def build_explainability(
    ds: InteractionDataset, neighborhoods: ItemNeighborhoods, source: str = "training"
) -> ExplainabilityMatrix:
    """E over ``ds``'s interactions and the given neighborhoods."""
    return explainability_from_matrix(ds.matrix(), neighborhoods, source=source)


def phase_dataset(split: LooSplit, phase: Phase) -> InteractionDataset:
    """Training data for ``training``; all interactions for ``evaluation``."""
    if phase == "training":
        return split.train
    if phase == "evaluation":
        return split.full
    raise ValueError(f"Unknown phase '{phase}'")


def explainability_for_phase(
    split: LooSplit,
    eta: int,
    phase: Phase,
    neighborhoods: Optional[ItemNeighborhoods] = None,
) -> ExplainabilityMatrix:
    """Neighborhoods and E recomputed from one phase's data only."""
    data = phase_dataset(split, phase)
    neighborhoods = neighborhoods or build_neighborhoods(data, eta)
    matrix = build_explainability(data, neighborhoods, source=phase)
    logger.info(
        "Explainability (%s, eta=%d): %d nonzero entries", phase, eta, matrix.nnz
    )
    return matrix


def average_explainability(E: ExplainabilityMatrix, ds: InteractionDataset) -> float:
    """Mean of E over every (user, item) cell of ``ds``."""
    cells = ds.n_users * ds.n_items
    if cells == 0:
        return 0.0
    return float(E.counts.sum()) / E.eta / cells


def explain_recommendation(
    user: int, item: int, neighborhoods: ItemNeighborhoods, ds: InteractionDataset
) -> Explanation:
    """Neighbors of ``item`` the user interacted with, in neighborhood order."""
    items = neighborhoods.neighbor_items(item)
    start = neighborhoods.indptr[item]
    sims = neighborhoods.similarities[start : start + items.size]
    liked = np.isin(items, ds.positives(user))
    return Explanation(
        user=user,
        user_id=ds.user_ids[user],
        item=item,
        item_id=ds.item_ids[item],
        explainability=int(liked.sum()) / neighborhoods.eta,
        neighbors=[
            ExplanationNeighbor(item=int(n), item_id=ds.item_ids[n], similarity=float(s))
            for n, s in zip(items[liked], sims[liked])
        ],
    )
