"""Explainable recommender tools for LangChain."""

import json
from typing import Any, Dict

from langchain_core.tools import StructuredTool

from .constants import TOOL_DATASET_STATS, TOOL_EXPLAIN, TOOL_RECOMMEND
from .errors import ExplainableBPRError
from .schemas import DatasetStatsInput, ExplainInput, RecommendInput
from .service import RecommenderService


def _format_response(data: Dict[str, Any]) -> str:
    """Format response for LLM.

    Always returns JSON string with 'message' field for LLM
    and optional 'details' for developers.
    """
    return json.dumps(data, indent=2)


def create_recommend_tool(service: RecommenderService) -> StructuredTool:
    """Create ebpr_recommend tool."""

    def recommend_fn(user_id: str, k: int = 10) -> str:
        """Recommend items the user has not interacted with yet.

        Args:
            user_id: Raw user id from the interaction log
            k: Number of recommendations (1-100)

        Returns:
            JSON string with ranked items and their explainability
        """
        try:
            explanations = service.recommend(user_id, k)
        except ExplainableBPRError as e:
            return _format_response(e.to_response())

        explained = sum(1 for item in explanations if item.has_explanation)
        return _format_response(
            {
                "message": f"Top {len(explanations)} items for user {user_id} "
                f"({explained} with an item-based explanation)",
                "user_id": user_id,
                "items": [
                    {
                        "rank": rank,
                        "item_id": item.item_id,
                        "explainability": item.explainability,
                        "explanation": item.render(),
                    }
                    for rank, item in enumerate(explanations, start=1)
                ],
            }
        )

    return StructuredTool(
        func=recommend_fn,
        name=TOOL_RECOMMEND,
        description="Recommend items to a user, each with its explainability score and "
        "the similar items the user already liked.",
        args_schema=RecommendInput,
    )


def create_explain_tool(service: RecommenderService) -> StructuredTool:
    """Create ebpr_explain tool."""

    def explain_fn(user_id: str, item_id: str) -> str:
        """Explain an item to a user through the neighbors they interacted with.

        Args:
            user_id: Raw user id from the interaction log
            item_id: Raw item id from the interaction log

        Returns:
            JSON string with the explainability score and supporting neighbors
        """
        try:
            explanation = service.explain(user_id, item_id)
        except ExplainableBPRError as e:
            return _format_response(e.to_response())

        return _format_response(
            {
                "message": explanation.render(),
                "explainability": explanation.explainability,
                "neighbors": [n.model_dump() for n in explanation.neighbors],
            }
        )

    return StructuredTool(
        func=explain_fn,
        name=TOOL_EXPLAIN,
        description="Explain why an item suits a user: the fraction of its most similar "
        "items the user interacted with, and which ones.",
        args_schema=ExplainInput,
    )


def create_dataset_stats_tool(service: RecommenderService) -> StructuredTool:
    """Create ebpr_dataset_stats tool."""

    def dataset_stats_fn() -> str:
        """Report user, item and interaction counts.

        Returns:
            JSON string with dataset statistics
        """
        stats = service.stats()
        return _format_response(
            {
                "message": f"{stats.users} users, {stats.items} items, "
                f"{stats.interactions} interactions (sparsity {stats.sparsity:.4f})",
                "details": stats.model_dump(),
            }
        )

    return StructuredTool(
        func=dataset_stats_fn,
        name=TOOL_DATASET_STATS,
        description="Get the size and sparsity of the interaction dataset.",
        args_schema=DatasetStatsInput,
    )
