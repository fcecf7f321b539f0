import numpy as np
import pytest

from explainable_bpr.dataset import (
    InteractionDataset,
    RawInteraction,
    binarize_and_index,
    dataset_stats,
    filter_min_interactions,
    filter_min_item_interactions,
    load_interactions,
    load_rated_testset,
    loo_split,
    sample_training_triples,
)
from explainable_bpr.errors import DataError
from explainable_bpr.schemas import InteractionFormat


def _record(user, item, value=5.0, timestamp=0, line=1):
    return RawInteraction(user, item, value, timestamp, line)


# ==========================================
# INGESTION
# ==========================================


def test_load_interactions_rejects_non_numeric_rating(tmp_path):
    path = tmp_path / "u.data"
    path.write_text("1\t10\t5\t100\n1\t11\tfive\t101\n2\t10\t3\t102\n2\t12\t4\t103\n")
    records, rejected = load_interactions(path)
    assert len(records) == 3
    assert len(rejected) == 1
    assert rejected[0].line == 2
    assert "rating" in rejected[0].reason


def test_load_interactions_empty_file(tmp_path):
    path = tmp_path / "empty.data"
    path.write_text("")
    records, rejected = load_interactions(path)
    assert records == []
    assert rejected == []


def test_load_interactions_unreadable_file(tmp_path):
    with pytest.raises(DataError) as info:
        load_interactions(tmp_path / "missing.data")
    assert info.value.code == "UNREADABLE_FILE"
    assert info.value.exit_code == 2


def test_load_interactions_rejects_short_and_negative_lines(tmp_path):
    path = tmp_path / "u.data"
    path.write_text("1\t10\t5\t100\n1\t11\n1\t12\t-1\t100\n\n")
    records, rejected = load_interactions(path)
    assert [r.item_id for r in records] == ["10"]
    assert [r.line for r in rejected] == [2, 3]


def test_load_interactions_custom_format(tmp_path):
    path = tmp_path / "ratings.csv"
    path.write_text("item,user\na,x\nb,y\n")
    fmt = InteractionFormat(delimiter=",", columns="item,user", skip_header=1)
    records, rejected = load_interactions(path, fmt)
    assert rejected == []
    assert [(r.user_id, r.item_id, r.value) for r in records] == [("x", "a", 1.0), ("y", "b", 1.0)]
    # Without a timestamp column the line number orders interactions
    assert [r.timestamp for r in records] == [2, 3]


def test_raw_interaction_rejects_negative_value():
    with pytest.raises(ValueError):
        _record("u", "i", value=-1.0)


# ==========================================
# BINARIZATION AND FILTERING
# ==========================================


def test_binarize_excludes_value_at_threshold():
    ds = binarize_and_index([_record("u", "a", 0.0, line=1), _record("u", "b", 1.0, line=2)])
    assert ds.item_ids == ("b",)
    assert ds.interaction_count == 1


def test_binarize_keeps_latest_duplicate():
    ds = binarize_and_index(
        [_record("u", "a", 3.0, timestamp=20, line=1), _record("u", "a", 4.0, timestamp=10, line=2)]
    )
    assert ds.interaction_count == 1
    assert ds.timestamps.tolist() == [20]


def test_binarize_indexes_in_first_appearance_order():
    ds = binarize_and_index(
        [_record("z", "b", line=1), _record("y", "a", line=2), _record("z", "a", line=3)]
    )
    assert ds.user_ids == ("z", "y")
    assert ds.item_ids == ("b", "a")
    assert ds.user_index["y"] == 1


def test_binarize_empty_input():
    ds = binarize_and_index([])
    assert ds.n_users == 0
    assert ds.interaction_count == 0


def _user_with(n_positives, n_items=12):
    Y = np.zeros((2, n_items))
    Y[0, :n_positives] = 1
    Y[1, :10] = 1
    return InteractionDataset.from_matrix(Y)


def test_filter_removes_user_below_minimum():
    ds = filter_min_interactions(_user_with(9), 10)
    assert ds.n_users == 1
    assert ds.user_ids == ("1",)
    assert ds.users.tolist() == [0] * 10


def test_filter_retains_user_at_minimum():
    ds = _user_with(10)
    assert filter_min_interactions(ds, 10) is ds


def test_filter_min_item_interactions_reindexes():
    Y = np.array([[1, 1, 0], [1, 0, 0], [0, 0, 1]])
    ds = filter_min_item_interactions(InteractionDataset.from_matrix(Y), 2)
    assert ds.item_ids == ("0",)
    assert ds.user_ids == ("0", "1")
    assert ds.interaction_count == 2


def test_dataset_stats():
    stats = dataset_stats(InteractionDataset.from_matrix(np.array([[1, 0], [1, 1]])))
    assert (stats.users, stats.items, stats.interactions) == (2, 2, 3)
    assert stats.sparsity == pytest.approx(0.25)


def test_dataset_positives_are_chronological():
    ds = binarize_and_index(
        [_record("u", "late", timestamp=9, line=1), _record("u", "early", timestamp=1, line=2)]
    )
    assert [ds.item_ids[i] for i in ds.positives(0)] == ["early", "late"]
    assert ds.contains([0, 0], [0, 5]).tolist() == [True, False]


def test_load_rated_testset_drops_unknown_ids(tmp_path):
    ds = binarize_and_index([_record("1", "10"), _record("2", "11", line=2)])
    path = tmp_path / "test.data"
    path.write_text("1\t11\t4\t1\n2\t10\t2\t2\n3\t10\t5\t3\n")
    testset = load_rated_testset(path, ds)
    assert testset == {0: [(1, 4.0)], 1: [(0, 2.0)]}


# ==========================================
# LEAVE-ONE-OUT SPLIT
# ==========================================


def _ordered_records():
    return [
        _record("a", "z", timestamp=12, line=1),
        _record("a", "x", timestamp=5, line=2),
        _record("a", "y", timestamp=9, line=3),
        _record("b", "p", timestamp=1, line=4),
        _record("b", "q", timestamp=2, line=5),
        _record("b", "r", timestamp=3, line=6),
    ]


def test_loo_split_holds_out_latest_items():
    ds = binarize_and_index(_ordered_records())
    split = loo_split(ds, n_eval_negatives=1, seed=0)
    a = ds.user_index["a"]
    assert split.test_items[a] == ds.item_index["z"]
    assert split.validation_items[a] == ds.item_index["y"]
    assert split.train.positives(a).tolist() == [ds.item_index["x"]]


def test_loo_split_is_deterministic(toy_dataset):
    first = loo_split(toy_dataset, n_eval_negatives=5, seed=11)
    second = loo_split(toy_dataset, n_eval_negatives=5, seed=11)
    np.testing.assert_array_equal(first.test_negatives, second.test_negatives)
    np.testing.assert_array_equal(first.validation_negatives, second.validation_negatives)
    np.testing.assert_array_equal(first.train.items, second.train.items)


def test_loo_split_negatives_are_never_positives(toy_split):
    full = toy_split.full
    for user in range(toy_split.n_users):
        positives = set(full.positives(user).tolist())
        test = set(toy_split.test_negatives[user].tolist())
        validation = set(toy_split.validation_negatives[user].tolist())
        assert len(test) == 5
        assert not test & positives
        assert not validation & positives
        assert not test & validation
    assert toy_split.train.interaction_count == full.interaction_count - 2 * full.n_users


def test_loo_split_too_few_positives():
    ds = binarize_and_index([_record("a", "x"), _record("a", "y", line=2)])
    with pytest.raises(DataError) as info:
        loo_split(ds, n_eval_negatives=1)
    assert info.value.code == "TOO_FEW_POSITIVES"
    assert info.value.details["user_id"] == "a"


def test_loo_split_too_few_negatives():
    ds = binarize_and_index(_ordered_records())
    with pytest.raises(DataError) as info:
        loo_split(ds, n_eval_negatives=2)
    assert info.value.code == "TOO_FEW_NEGATIVES"


def test_merged_split_moves_validation_into_train(toy_split):
    merged = toy_split.merged()
    assert not merged.has_validation
    assert merged.train.interaction_count == toy_split.train.interaction_count + toy_split.n_users
    users = np.arange(toy_split.n_users)
    assert merged.train.contains(users, toy_split.validation_items).all()
    assert not merged.train.contains(users, toy_split.test_items).any()
    with pytest.raises(ValueError):
        merged.holdout("validation")


def test_candidates_put_holdout_first(toy_split):
    candidates = toy_split.candidates("validation")
    assert candidates.shape == (toy_split.n_users, 6)
    np.testing.assert_array_equal(candidates[:, 0], toy_split.validation_items)


# ==========================================
# TRAINING TRIPLES
# ==========================================


def test_one_triple_per_training_positive(toy_split):
    triples = sample_training_triples(toy_split.train, 5, exclude=toy_split.full)
    assert len(triples) == toy_split.train.interaction_count
    np.testing.assert_array_equal(triples.positives, toy_split.train.items)


def test_triple_negatives_avoid_all_positives(toy_split):
    triples = sample_training_triples(toy_split.train, 5, exclude=toy_split.full)
    assert not toy_split.full.contains(triples.users, triples.negatives).any()


def test_triple_sampling_is_deterministic(toy_split):
    first = sample_training_triples(toy_split.train, 42)
    second = sample_training_triples(toy_split.train, 42)
    np.testing.assert_array_equal(first.negatives, second.negatives)


def test_triple_sampling_without_candidates():
    ds = InteractionDataset.from_matrix(np.ones((2, 3)))
    with pytest.raises(DataError) as info:
        sample_training_triples(ds, 0)
    assert info.value.code == "NO_NEGATIVE_CANDIDATES"
