"""Interaction ingestion, indexing, filtering and leave-one-out splitting."""

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.sparse import csc_matrix, csr_matrix

from .constants import (
    DEFAULT_BINARIZE_THRESHOLD,
    DEFAULT_EVAL_NEGATIVES,
    DEFAULT_MIN_INTERACTIONS,
)
from .errors import DataError
from .schemas import DatasetStats, InteractionFormat

logger = logging.getLogger(__name__)

# ==========================================
# RECORDS
# ==========================================


@dataclass(frozen=True)
class RawInteraction:
    """One parsed line of an interaction log."""

    user_id: str
    item_id: str
    value: float
    timestamp: int
    line: int

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"Interaction value must be >= 0, got {self.value}")


@dataclass(frozen=True)
class RejectedLine:
    """A line skipped during ingestion."""

    line: int
    reason: str
    text: str


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """Binary user-item interactions with dense index maps.

    Rows are kept sorted by (user, timestamp, file order), so each user's positives
    form one contiguous, chronologically ordered slice.

    Attributes:
        user_ids: Raw user id per dense user index
        item_ids: Raw item id per dense item index
        users: Dense user index per interaction
        items: Dense item index per interaction
        timestamps: Timestamp per interaction
        sequence: Source line per interaction (tie-break for equal timestamps)
    """

    user_ids: Tuple[str, ...]
    item_ids: Tuple[str, ...]
    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray
    sequence: np.ndarray

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        items = np.asarray(self.items, dtype=np.int64)
        timestamps = np.asarray(self.timestamps, dtype=np.int64)
        sequence = np.asarray(self.sequence, dtype=np.int64)
        order = np.lexsort((sequence, timestamps, users))
        for name, values in (
            ("users", users),
            ("items", items),
            ("timestamps", timestamps),
            ("sequence", sequence),
        ):
            values = values[order]
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        object.__setattr__(self, "user_ids", tuple(self.user_ids))
        object.__setattr__(self, "item_ids", tuple(self.item_ids))

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def interaction_count(self) -> int:
        return int(self.users.size)

    @cached_property
    def user_index(self) -> Dict[str, int]:
        return {raw: index for index, raw in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> Dict[str, int]:
        return {raw: index for index, raw in enumerate(self.item_ids)}

    @cached_property
    def indptr(self) -> np.ndarray:
        """Row offsets: user ``u`` owns rows ``indptr[u]:indptr[u + 1]``."""
        return np.searchsorted(self.users, np.arange(self.n_users + 1), side="left")

    @cached_property
    def keys(self) -> np.ndarray:
        """Sorted ``user * n_items + item`` keys of every positive."""
        return np.sort(self.users * self.n_items + self.items)

    def positives(self, user: int) -> np.ndarray:
        """Items of ``user`` in chronological order."""
        return self.items[self.indptr[user] : self.indptr[user + 1]]

    def user_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users)

    def item_counts(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.n_items)

    def contains(self, users, items) -> np.ndarray:
        """Vectorized membership test of (user, item) pairs."""
        return _isin_sorted(self.keys, np.asarray(users) * self.n_items + np.asarray(items))

    @cached_property
    def _matrix(self) -> csr_matrix:
        data = np.ones(self.interaction_count, dtype=np.float64)
        return csr_matrix((data, (self.users, self.items)), shape=(self.n_users, self.n_items))

    def matrix(self) -> csr_matrix:
        """Binary user x item interaction matrix."""
        return self._matrix

    @cached_property
    def _item_matrix(self) -> csc_matrix:
        return self._matrix.tocsc()

    def item_matrix(self) -> csc_matrix:
        """Column-compressed copy of ``matrix()``."""
        return self._item_matrix

    def item_users(self, item: int) -> np.ndarray:
        """Users who interacted with ``item``."""
        columns = self._item_matrix
        return columns.indices[columns.indptr[item] : columns.indptr[item + 1]]

    def subset(self, mask: np.ndarray) -> "InteractionDataset":
        """Keep the rows selected by ``mask``; index maps are unchanged."""
        return InteractionDataset(
            user_ids=self.user_ids,
            item_ids=self.item_ids,
            users=self.users[mask],
            items=self.items[mask],
            timestamps=self.timestamps[mask],
            sequence=self.sequence[mask],
        )

    def with_rows(self, users, items, timestamps, sequence) -> "InteractionDataset":
        """Same index maps with extra rows appended."""
        return InteractionDataset(
            user_ids=self.user_ids,
            item_ids=self.item_ids,
            users=np.concatenate([self.users, users]),
            items=np.concatenate([self.items, items]),
            timestamps=np.concatenate([self.timestamps, timestamps]),
            sequence=np.concatenate([self.sequence, sequence]),
        )

    @classmethod
    def from_matrix(cls, matrix, user_ids=None, item_ids=None) -> "InteractionDataset":
        """Build a dataset from a binary (dense or sparse) user x item matrix."""
        coo = csr_matrix(matrix).tocoo()
        keep = coo.data != 0
        n_users, n_items = coo.shape
        return cls(
            user_ids=user_ids or tuple(str(u) for u in range(n_users)),
            item_ids=item_ids or tuple(str(i) for i in range(n_items)),
            users=coo.row[keep],
            items=coo.col[keep],
            timestamps=np.zeros(int(keep.sum()), dtype=np.int64),
            sequence=np.arange(int(keep.sum())),
        )


def _isin_sorted(sorted_keys: np.ndarray, queries: np.ndarray) -> np.ndarray:
    if sorted_keys.size == 0:
        return np.zeros(np.shape(queries), dtype=bool)
    position = np.searchsorted(sorted_keys, queries)
    position = np.minimum(position, sorted_keys.size - 1)
    return sorted_keys[position] == queries


def _empty_dataset() -> InteractionDataset:
    empty = np.zeros(0, dtype=np.int64)
    return InteractionDataset((), (), empty, empty, empty, empty)


# ==========================================
# INGESTION
# ==========================================


def load_interactions(
    path: Union[str, Path], fmt: Optional[InteractionFormat] = None
) -> Tuple[List[RawInteraction], List[RejectedLine]]:
    """Parse a delimiter-separated interaction log.

    Args:
        path: Log file path
        fmt: Column layout (default: ml-100k ``u.data``)

    Returns:
        Parsed records and the lines that were rejected

    Raises:
        DataError: If the file cannot be read
    """
    fmt = fmt or InteractionFormat()
    columns = {name: position for position, name in enumerate(fmt.columns)}
    records: List[RawInteraction] = []
    rejected: List[RejectedLine] = []

    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(
            f"Cannot read interaction file {path}: {e}",
            code="UNREADABLE_FILE",
            details={"path": str(path)},
        )

    for number, text in enumerate(lines, start=1):
        if number <= fmt.skip_header or not text.strip():
            continue
        fields = text.split(fmt.delimiter)
        if len(fields) < len(fmt.columns):
            rejected.append(
                RejectedLine(number, f"expected {len(fmt.columns)} fields", text)
            )
            continue
        user_id = fields[columns["user"]].strip()
        item_id = fields[columns["item"]].strip()
        if not user_id or not item_id:
            rejected.append(RejectedLine(number, "empty user or item id", text))
            continue

        value = 1.0
        if "rating" in columns:
            try:
                value = float(fields[columns["rating"]])
            except ValueError:
                rejected.append(RejectedLine(number, "non-numeric rating", text))
                continue
            if not np.isfinite(value) or value < 0:
                rejected.append(RejectedLine(number, "rating must be finite and >= 0", text))
                continue

        timestamp = number
        if "timestamp" in columns:
            raw = fields[columns["timestamp"]].strip()
            try:
                timestamp = int(raw)
            except ValueError:
                try:
                    timestamp = int(float(raw))
                except (ValueError, OverflowError):
                    rejected.append(RejectedLine(number, "non-numeric timestamp", text))
                    continue

        records.append(RawInteraction(user_id, item_id, value, timestamp, number))

    for line in rejected:
        logger.warning("Skipped line %d of %s: %s", line.line, path, line.reason)
    logger.info("Loaded %d interactions from %s (%d rejected)", len(records), path, len(rejected))
    return records, rejected


def binarize_and_index(
    raw: Sequence[RawInteraction], threshold: float = DEFAULT_BINARIZE_THRESHOLD
) -> InteractionDataset:
    """Keep interactions with value above ``threshold`` and index them densely.

    Duplicate (user, item) pairs collapse to the record with the latest timestamp
    (later line wins ties). Dense indices follow first appearance in the file.
    """
    frame = pd.DataFrame.from_records(
        [(r.user_id, r.item_id, r.value, r.timestamp, r.line) for r in raw],
        columns=["user_id", "item_id", "value", "timestamp", "line"],
    )
    frame = frame[frame["value"] > threshold]
    if frame.empty:
        return _empty_dataset()

    frame = frame.sort_values(["timestamp", "line"], kind="mergesort")
    frame = frame.drop_duplicates(["user_id", "item_id"], keep="last")
    frame = frame.sort_values("line", kind="mergesort")

    users, user_ids = pd.factorize(frame["user_id"], sort=False)
    items, item_ids = pd.factorize(frame["item_id"], sort=False)
    return InteractionDataset(
        user_ids=tuple(user_ids),
        item_ids=tuple(item_ids),
        users=users,
        items=items,
        timestamps=frame["timestamp"].to_numpy(),
        sequence=frame["line"].to_numpy(),
    )


def filter_min_interactions(
    ds: InteractionDataset, min_interactions: int = DEFAULT_MIN_INTERACTIONS
) -> InteractionDataset:
    """Drop users with fewer than ``min_interactions`` positives (one pass).

    Users are re-indexed densely; item indices are left untouched.
    """
    keep = ds.user_counts() >= min_interactions
    if keep.all():
        return ds
    remap = np.full(ds.n_users, -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    rows = keep[ds.users]
    logger.info("Removed %d users with < %d interactions", int((~keep).sum()), min_interactions)
    return InteractionDataset(
        user_ids=tuple(raw for raw, kept in zip(ds.user_ids, keep) if kept),
        item_ids=ds.item_ids,
        users=remap[ds.users[rows]],
        items=ds.items[rows],
        timestamps=ds.timestamps[rows],
        sequence=ds.sequence[rows],
    )


def filter_min_item_interactions(
    ds: InteractionDataset, min_item_interactions: int
) -> InteractionDataset:
    """Drop items with fewer than ``min_item_interactions`` users.

    Both items and users are re-indexed densely; users left without any
    interaction disappear.
    """
    keep_items = ds.item_counts() >= min_item_interactions
    rows = keep_items[ds.items]
    item_remap = np.full(ds.n_items, -1, dtype=np.int64)
    item_remap[keep_items] = np.arange(int(keep_items.sum()))

    keep_users = np.bincount(ds.users[rows], minlength=ds.n_users) > 0
    user_remap = np.full(ds.n_users, -1, dtype=np.int64)
    user_remap[keep_users] = np.arange(int(keep_users.sum()))
    return InteractionDataset(
        user_ids=tuple(raw for raw, kept in zip(ds.user_ids, keep_users) if kept),
        item_ids=tuple(raw for raw, kept in zip(ds.item_ids, keep_items) if kept),
        users=user_remap[ds.users[rows]],
        items=item_remap[ds.items[rows]],
        timestamps=ds.timestamps[rows],
        sequence=ds.sequence[rows],
    )


def dataset_stats(ds: InteractionDataset) -> DatasetStats:
    cells = ds.n_users * ds.n_items
    sparsity = 1.0 - ds.interaction_count / cells if cells else 1.0
    return DatasetStats(
        users=ds.n_users,
        items=ds.n_items,
        interactions=ds.interaction_count,
        sparsity=sparsity,
    )


def load_rated_testset(
    path: Union[str, Path], ds: InteractionDataset, fmt: Optional[InteractionFormat] = None
) -> Dict[int, List[Tuple[int, float]]]:
    """Load a randomly-assigned rated test set mapped through ``ds``'s index maps.

    Records whose user or item is unknown to ``ds`` are dropped with a warning.
    """
    records, _ = load_interactions(path, fmt or InteractionFormat())
    testset: Dict[int, List[Tuple[int, float]]] = {}
    unknown = 0
    for record in records:
        user = ds.user_index.get(record.user_id)
        item = ds.item_index.get(record.item_id)
        if user is None or item is None:
            unknown += 1
            continue
        testset.setdefault(user, []).append((item, record.value))
    if unknown:
        logger.warning("Dropped %d test ratings with unknown user or item ids", unknown)
    return testset


# ==========================================
# LEAVE-ONE-OUT SPLIT
# ==========================================


@dataclass(frozen=True, eq=False)
class LooSplit:
    """Leave-one-out split with sampled evaluation negatives.

    Attributes:
        full: All filtered interactions
        train: ``full`` without each user's test and validation items
        test_items: Held-out test item per user
        test_negatives: ``n_users x n_eval_negatives`` sampled negatives
        validation_items: Held-out validation item per user (None once merged)
        validation_negatives: Validation negatives, disjoint from the test ones
        seed: Sampling seed
    """

    full: InteractionDataset
    train: InteractionDataset
    test_items: np.ndarray
    test_negatives: np.ndarray
    validation_items: Optional[np.ndarray]
    validation_negatives: Optional[np.ndarray]
    seed: int

    @property
    def n_users(self) -> int:
        return self.full.n_users

    @property
    def n_items(self) -> int:
        return self.full.n_items

    @property
    def has_validation(self) -> bool:
        return self.validation_items is not None

    def holdout(self, which: str = "test") -> Tuple[np.ndarray, np.ndarray]:
        """Held-out item and negatives per user for ``which`` in {test, validation}."""
        if which == "test":
            return self.test_items, self.test_negatives
        if which == "validation":
            if not self.has_validation:
                raise ValueError("Split has no validation holdout (merged split)")
            return self.validation_items, self.validation_negatives
        raise ValueError(f"Unknown holdout '{which}'")

    def candidates(self, which: str = "test") -> np.ndarray:
        """``n_users x (1 + n_negatives)`` candidates, held-out item in column 0."""
        items, negatives = self.holdout(which)
        return np.column_stack([items, negatives])

    def merged(self) -> "LooSplit":
        """Split whose training part also contains the validation items."""
        if not self.has_validation:
            return self
        users = np.arange(self.n_users)
        held = self.full.contains(users, self.validation_items)
        rows = np.flatnonzero(
            np.isin(
                self.full.users * self.n_items + self.full.items,
                users[held] * self.n_items + self.validation_items[held],
            )
        )
        train = self.train.with_rows(
            self.full.users[rows],
            self.full.items[rows],
            self.full.timestamps[rows],
            self.full.sequence[rows],
        )
        return LooSplit(
            full=self.full,
            train=train,
            test_items=self.test_items,
            test_negatives=self.test_negatives,
            validation_items=None,
            validation_negatives=None,
            seed=self.seed,
        )


def loo_split(
    ds: InteractionDataset, n_eval_negatives: int = DEFAULT_EVAL_NEGATIVES, seed: int = 0
) -> LooSplit:
    """Hold out each user's latest interaction for test and the next for validation.

    Test and validation negatives are drawn together without replacement from the
    user's non-positives, so the two sets are disjoint.

    Raises:
        DataError: If a user has fewer than 3 positives or fewer than
            ``2 * n_eval_negatives`` candidate negatives
    """
    counts = ds.user_counts()
    short = np.flatnonzero(counts < 3)
    if short.size:
        user = ds.user_ids[short[0]]
        raise DataError(
            f"User {user} has {counts[short[0]]} positives; leave-one-out needs at least 3",
            code="TOO_FEW_POSITIVES",
            details={"user_id": user},
        )

    ends = ds.indptr[1:]
    test_rows = ends - 1
    validation_rows = ends - 2
    train_mask = np.ones(ds.interaction_count, dtype=bool)
    train_mask[test_rows] = False
    train_mask[validation_rows] = False

    rng = np.random.default_rng(seed)
    all_items = np.arange(ds.n_items)
    test_negatives = np.empty((ds.n_users, n_eval_negatives), dtype=np.int64)
    validation_negatives = np.empty((ds.n_users, n_eval_negatives), dtype=np.int64)
    for user in range(ds.n_users):
        candidates = np.setdiff1d(all_items, ds.positives(user))
        if candidates.size < 2 * n_eval_negatives:
            raise DataError(
                f"User {ds.user_ids[user]} has {candidates.size} candidate negatives; "
                f"need {2 * n_eval_negatives}",
                code="TOO_FEW_NEGATIVES",
                details={"user_id": ds.user_ids[user]},
            )
        drawn = rng.choice(candidates, size=2 * n_eval_negatives, replace=False)
        test_negatives[user] = drawn[:n_eval_negatives]
        validation_negatives[user] = drawn[n_eval_negatives:]

    logger.info(
        "Split %d users: %d train, %d validation, %d test interactions",
        ds.n_users,
        int(train_mask.sum()),
        ds.n_users,
        ds.n_users,
    )
    return LooSplit(
        full=ds,
        train=ds.subset(train_mask),
        test_items=ds.items[test_rows].copy(),
        test_negatives=test_negatives,
        validation_items=ds.items[validation_rows].copy(),
        validation_negatives=validation_negatives,
        seed=seed,
    )


# ==========================================
# TRAINING TRIPLES
# ==========================================


@dataclass(frozen=True, eq=False)
class Triples:
    """Parallel arrays of (user, positive item, negative item)."""

    users: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self) -> int:
        return int(self.users.size)

    def __iter__(self) -> Iterator[Tuple[int, int, int]]:
        return zip(self.users.tolist(), self.positives.tolist(), self.negatives.tolist())

    def take(self, index) -> "Triples":
        return Triples(self.users[index], self.positives[index], self.negatives[index])


def sample_training_triples(
    train: InteractionDataset, epoch_seed: int, exclude: Optional[InteractionDataset] = None
) -> Triples:
    """One (u, i+, i-) triple per training positive.

    Negatives are uniform over items that are neither a training positive nor a
    positive of ``exclude`` (the full dataset, so held-out items never serve as
    negatives). Collisions are resampled.

    Raises:
        DataError: If some user has no candidate negative
    """
    forbidden = train.keys
    if exclude is not None:
        forbidden = np.union1d(forbidden, exclude.keys)
    n_items = train.n_items
    blocked = np.bincount(forbidden // max(n_items, 1), minlength=train.n_users)
    users = train.users
    exhausted = np.flatnonzero(blocked[np.unique(users)] >= n_items)
    if exhausted.size:
        user = train.user_ids[np.unique(users)[exhausted[0]]]
        raise DataError(
            f"User {user} has no candidate negative items",
            code="NO_NEGATIVE_CANDIDATES",
            details={"user_id": user},
        )

    rng = np.random.default_rng(epoch_seed)
    negatives = rng.integers(0, n_items, size=users.size)
    pending = np.flatnonzero(_isin_sorted(forbidden, users * n_items + negatives))
    while pending.size:
        negatives[pending] = rng.integers(0, n_items, size=pending.size)
        clash = _isin_sorted(forbidden, users[pending] * n_items + negatives[pending])
        pending = pending[clash]
    return Triples(users.copy(), train.items.copy(), negatives)
