"""Explainable recommender toolkit for LangChain."""

from pathlib import Path
from typing import List, Optional, Union

from langchain_core.tools import BaseTool, BaseToolkit

from .service import RecommenderService
from .tools import create_dataset_stats_tool, create_explain_tool, create_recommend_tool


class RecommenderToolkit(BaseToolkit):
    """Toolkit exposing a trained explainable recommender to AI agents.

    Enables AI agents to:
    - Recommend unseen items with per-item explainability
    - Explain an item through the similar items a user already liked
    - Report dataset size and sparsity

    Example:
        ```python
        from explainable_bpr import RecommenderToolkit

        toolkit = RecommenderToolkit.from_artifacts("runs/ml-100k", loss="EBPR")
        tools = toolkit.get_tools()
        ```

    Attributes:
        service: Query layer over the model and its evaluation-phase artifacts
    """

    model_config = {"arbitrary_types_allowed": True}

    service: Optional[RecommenderService] = None

    def __init__(self, service: RecommenderService):
        """Initialize the toolkit.

        Args:
            service: Recommender service built from a model and its artifacts
        """
        super().__init__()
        self.service = service

    @classmethod
    def from_artifacts(
        cls, directory: Union[str, Path], loss: str, replicate: int = 0
    ) -> "RecommenderToolkit":
        """Load model, split and neighborhoods written by the command-line pipeline."""
        return cls(RecommenderService.from_artifacts(directory, loss, replicate))

    def get_tools(self) -> List[BaseTool]:
        """Get recommender tools.

        Returns:
            List of LangChain tools
        """
        return [
            create_recommend_tool(self.service),
            create_explain_tool(self.service),
            create_dataset_stats_tool(self.service),
        ]
