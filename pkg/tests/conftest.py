import numpy as np
import pytest

from explainable_bpr.dataset import InteractionDataset, RawInteraction, loo_split
from explainable_bpr.explainability import build_neighborhoods
from explainable_bpr.model import init_model
from explainable_bpr.service import RecommenderService


def clustered_matrix(n_users=30, n_items=30, n_clusters=3, seed=7, inside=0.6, outside=0.05):
    """Binary matrix where users mostly interact with their own cluster's items."""
    rng = np.random.default_rng(seed)
    user_cluster = np.arange(n_users) % n_clusters
    item_cluster = np.arange(n_items) % n_clusters
    probability = np.where(user_cluster[:, None] == item_cluster[None, :], inside, outside)
    Y = (rng.random((n_users, n_items)) < probability).astype(np.float64)
    for user in range(n_users):
        own = np.flatnonzero(item_cluster == user_cluster[user])
        Y[user, rng.choice(own, size=3, replace=False)] = 1.0
    return Y


def records_from_matrix(Y, rating=4.0):
    """One RawInteraction per nonzero cell, timestamps increasing in row-major order."""
    records = []
    for line, (user, item) in enumerate(zip(*np.nonzero(Y)), start=1):
        records.append(RawInteraction(f"u{user}", f"i{item}", rating, 1000 + line, line))
    return records


def write_log(path, Y, rating=4):
    with open(path, "w", encoding="utf-8") as handle:
        for line, (user, item) in enumerate(zip(*np.nonzero(Y)), start=1):
            handle.write(f"u{user}\ti{item}\t{rating}\t{1000 + line}\n")
    return path


@pytest.fixture
def toy_matrix():
    return clustered_matrix()


@pytest.fixture
def toy_dataset(toy_matrix):
    return InteractionDataset.from_matrix(toy_matrix)


@pytest.fixture
def toy_split(toy_dataset):
    return loo_split(toy_dataset, n_eval_negatives=5, seed=0)


@pytest.fixture
def toy_service(toy_split):
    model = init_model(toy_split.n_users, toy_split.n_items, 4, seed=3, scale=1.0)
    return RecommenderService(
        model=model,
        full=toy_split.full,
        train=toy_split.train,
        neighborhoods=build_neighborhoods(toy_split.full, 3),
    )
