"""Query layer over a trained model and its evaluation-phase artifacts."""

from pathlib import Path
from typing import List, Union

from .artifacts import (
    RunPaths,
    load_checkpoint,
    load_dataset,
    load_neighborhoods,
    load_split,
)
from .dataset import InteractionDataset, dataset_stats
from .errors import UsageError
from .explainability import ItemNeighborhoods, explain_recommendation
from .model import FactorModel, recommend
from .schemas import DatasetStats, Explanation


class RecommenderService:
    """Resolve raw ids, rank the catalogue and explain recommendations.

    Args:
        model: Trained factors
        full: Every interaction (explanations use all of a user's history)
        train: Training interactions (excluded from recommendations)
        neighborhoods: Evaluation-phase item neighborhoods
        users_file: Id-mapping file named in unknown-id errors
    """

    def __init__(
        self,
        model: FactorModel,
        full: InteractionDataset,
        train: InteractionDataset,
        neighborhoods: ItemNeighborhoods,
        users_file: str = "users.tsv",
    ):
        self.model = model
        self.full = full
        self.train = train
        self.neighborhoods = neighborhoods
        self.users_file = users_file

    @classmethod
    def from_artifacts(
        cls, directory: Union[str, Path], loss: str, replicate: int = 0
    ) -> "RecommenderService":
        paths = RunPaths(directory)
        full = load_dataset(paths.directory)
        split = load_split(paths.split, full)
        return cls(
            model=load_checkpoint(paths.checkpoint(loss, replicate)),
            full=full,
            train=split.train,
            neighborhoods=load_neighborhoods(paths.neighborhoods("evaluation")),
            users_file=str(paths.users),
        )

    def resolve_user(self, user_id: str) -> int:
        user = self.full.user_index.get(str(user_id))
        if user is None:
            raise UsageError(
                f"Unknown user id '{user_id}'; known ids are listed in {self.users_file}",
                code="UNKNOWN_USER",
                details={"user_id": user_id, "id_map": self.users_file},
            )
        return user

    def resolve_item(self, item_id: str) -> int:
        item = self.full.item_index.get(str(item_id))
        if item is None:
            items_file = str(Path(self.users_file).with_name("items.tsv"))
            raise UsageError(
                f"Unknown item id '{item_id}'; known ids are listed in {items_file}",
                code="UNKNOWN_ITEM",
                details={"item_id": item_id, "id_map": items_file},
            )
        return item

    def recommend(self, user_id: str, k: int) -> List[Explanation]:
        """Top-``k`` unseen items, each with its explanation."""
        user = self.resolve_user(user_id)
        ranked = recommend(self.model, user, self.train, k)
        return [
            explain_recommendation(user, int(item), self.neighborhoods, self.full)
            for item in ranked.items
        ]

    def explain(self, user_id: str, item_id: str) -> Explanation:
        return explain_recommendation(
            self.resolve_user(user_id), self.resolve_item(item_id), self.neighborhoods, self.full
        )

    def stats(self) -> DatasetStats:
        return dataset_stats(self.full)
