"""Pydantic schemas for configuration, reports and tools."""

from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .constants import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_BINARIZE_THRESHOLD,
    DEFAULT_CUTOFF,
    DEFAULT_ETA,
    DEFAULT_EVAL_NEGATIVES,
    DEFAULT_L2,
    DEFAULT_LATENT_DIM,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_MIN_INTERACTIONS,
    DEFAULT_PATIENCE,
    DEFAULT_PROPENSITY_FLOOR,
    DEFAULT_RELEVANCE_THRESHOLD,
    DEFAULT_REPLICATES,
    DEFAULT_SEARCH_CONFIGS,
    DEFAULT_SEARCH_REPLICATES,
    ORACLE_Z_THRESHOLD,
)

# ==========================================
# LOSS KINDS
# ==========================================


class LossKind(str, Enum):
    """The five pairwise losses sharing the -log sigmoid core."""

    BPR = "BPR"
    UBPR = "UBPR"
    EBPR = "EBPR"
    PUEBPR = "pUEBPR"
    UEBPR = "UEBPR"

    @property
    def needs_explainability(self) -> bool:
        return self in (LossKind.EBPR, LossKind.PUEBPR, LossKind.UEBPR)

    @property
    def needs_propensity(self) -> bool:
        return self in (LossKind.UBPR, LossKind.PUEBPR, LossKind.UEBPR)

    @property
    def needs_neighborhood_propensity(self) -> bool:
        return self is LossKind.UEBPR


PropensityVariant = Literal["neighbor_sum", "neighbor_mean"]
Phase = Literal["training", "evaluation"]

# ==========================================
# INPUT FORMAT
# ==========================================

COLUMN_NAMES = {"user", "item", "rating", "timestamp", "ignore"}


class InteractionFormat(BaseModel):
    """Column layout of a delimiter-separated interaction log.

    Defaults match the ml-100k ``u.data`` file.
    """

    model_config = ConfigDict(frozen=True)

    delimiter: str = Field("\t", description="Field delimiter", min_length=1)
    columns: Tuple[str, ...] = Field(
        ("user", "item", "rating", "timestamp"),
        description="Column order; names from user, item, rating, timestamp, ignore",
    )
    skip_header: int = Field(0, description="Number of leading lines to skip", ge=0)

    @field_validator("columns", mode="before")
    @classmethod
    def _split_columns(cls, value):
        if isinstance(value, str):
            value = tuple(part.strip() for part in value.split(",") if part.strip())
        return value

    @field_validator("columns")
    @classmethod
    def _check_columns(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = set(value) - COLUMN_NAMES
        if unknown:
            raise ValueError(f"Unknown column names: {sorted(unknown)}")
        for required in ("user", "item"):
            if value.count(required) != 1:
                raise ValueError(f"Column '{required}' must appear exactly once")
        for optional in ("rating", "timestamp"):
            if value.count(optional) > 1:
                raise ValueError(f"Column '{optional}' may appear at most once")
        return value


# ==========================================
# TRAINING AND RUN CONFIGURATION
# ==========================================


class TrainingConfig(BaseModel):
    """Hyperparameters and run controls for one training run."""

    model_config = ConfigDict(frozen=True)

    loss: LossKind = Field(LossKind.BPR, description="Loss kind")
    latent_dim: int = Field(DEFAULT_LATENT_DIM, description="Latent dimension K", ge=1)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, description="Triples per SGD step", ge=1)
    l2: float = Field(DEFAULT_L2, description="L2 regularization strength", ge=0)
    eta: int = Field(DEFAULT_ETA, description="Neighborhood size", ge=1)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, description="SGD step size", ge=0)
    max_epochs: int = Field(DEFAULT_MAX_EPOCHS, description="Epoch budget", ge=1)
    patience: int = Field(DEFAULT_PATIENCE, description="Epochs without improvement", ge=1)
    early_stopping: bool = Field(True, description="Stop when validation NDCG stalls")
    seed: int = Field(0, description="Initialization and sampling seed", ge=0)
    weight_clip: bool = Field(False, description="Clamp instance weights to [0, 1]")
    propensity_variant: PropensityVariant = Field(
        "neighbor_sum", description="Neighborhood propensity form used by UEBPR"
    )
    propensity_floor: float = Field(
        DEFAULT_PROPENSITY_FLOOR,
        description="Lower clamp for propensity denominators",
        gt=0,
        le=1,
    )
    cutoff: int = Field(DEFAULT_CUTOFF, description="Validation cutoff K", ge=1)
    n_workers: int = Field(1, description="Threads for lock-free SGD", ge=1)
    deterministic: bool = Field(True, description="Force single-threaded, reproducible SGD")


class RunConfig(BaseModel):
    """Flat configuration for the command-line pipeline.

    Loaded from a ``key = value`` file, overridden by flags, and persisted verbatim
    into every run manifest.
    """

    model_config = ConfigDict(frozen=True)

    data_path: Optional[str] = Field(None, description="Interaction log path")
    delimiter: str = Field("\t", description="Field delimiter")
    columns: str = Field("user,item,rating,timestamp", description="Column order")
    skip_header: int = Field(0, ge=0)
    threshold: float = Field(DEFAULT_BINARIZE_THRESHOLD, description="Binarization threshold")
    min_interactions: int = Field(DEFAULT_MIN_INTERACTIONS, ge=1)
    n_eval_negatives: int = Field(DEFAULT_EVAL_NEGATIVES, ge=1)
    split_seed: int = Field(0, ge=0)
    output_dir: str = Field("runs", description="Artifact directory")

    loss: LossKind = Field(LossKind.BPR)
    latent_dim: int = Field(DEFAULT_LATENT_DIM, ge=1)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    l2: float = Field(DEFAULT_L2, ge=0)
    eta: int = Field(DEFAULT_ETA, ge=1)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, ge=0)
    max_epochs: int = Field(DEFAULT_MAX_EPOCHS, ge=1)
    patience: int = Field(DEFAULT_PATIENCE, ge=1)
    seed: int = Field(0, ge=0)
    weight_clip: bool = Field(False)
    propensity_variant: PropensityVariant = Field("neighbor_sum")
    propensity_floor: float = Field(DEFAULT_PROPENSITY_FLOOR, gt=0, le=1)
    n_workers: int = Field(1, ge=1)
    deterministic: bool = Field(True)

    cutoff: int = Field(DEFAULT_CUTOFF, ge=1)
    replicates: int = Field(DEFAULT_REPLICATES, ge=1)
    n_configs: int = Field(DEFAULT_SEARCH_CONFIGS, ge=1)
    search_replicates: int = Field(DEFAULT_SEARCH_REPLICATES, ge=1)
    relevance_threshold: float = Field(DEFAULT_RELEVANCE_THRESHOLD)

    def interaction_format(self) -> InteractionFormat:
        return InteractionFormat(
            delimiter=self.delimiter, columns=self.columns, skip_header=self.skip_header
        )

    def training_config(self, **overrides) -> TrainingConfig:
        """Resolve the training-relevant fields into a ``TrainingConfig``."""
        fields = {
            name: getattr(self, name)
            for name in TrainingConfig.model_fields
            if name in RunConfig.model_fields
        }
        fields.update(overrides)
        return TrainingConfig(**fields)


# ==========================================
# REPORTS
# ==========================================

UNIT_INTERVAL_METRICS = {"hr", "ndcg", "map", "mep", "wmep", "avg_pop"}
_EPS = 1e-9


class EvalReport(BaseModel):
    """Metric values of one model on one protocol at one cutoff."""

    protocol: Literal["loo_101", "unbiased_testset"] = "loo_101"
    cutoff: int = Field(DEFAULT_CUTOFF, ge=1)
    loss: Optional[str] = None
    seed: Optional[int] = None
    metrics: Dict[str, float] = Field(default_factory=dict)
    excluded_users: int = Field(0, ge=0, description="Users left out of the mean")

    @model_validator(mode="after")
    def _check_ranges(self) -> "EvalReport":
        for name, value in self.metrics.items():
            if name in UNIT_INTERVAL_METRICS and not (-_EPS <= value <= 1 + _EPS):
                raise ValueError(f"{name}={value} outside [0, 1]")
            if name == "div" and not (-_EPS <= value <= 0.5 + _EPS):
                raise ValueError(f"div={value} outside [0, 0.5]")
            if name == "efd" and value < -_EPS:
                raise ValueError(f"efd={value} is negative")
        return self

    def rows(self) -> List[Dict[str, object]]:
        """One machine-readable row per metric."""
        return [
            {
                "loss": self.loss,
                "protocol": self.protocol,
                "cutoff": self.cutoff,
                "seed": self.seed,
                "metric": name,
                "value": value,
            }
            for name, value in sorted(self.metrics.items())
        ]


class ReplicateSummary(BaseModel):
    """Per-metric means and standard deviations over replicates."""

    loss: Optional[str] = None
    protocol: str = "loo_101"
    cutoff: int = DEFAULT_CUTOFF
    n: int = Field(..., ge=1)
    mean: Dict[str, float]
    std: Dict[str, float]
    reports: List[EvalReport] = Field(default_factory=list)


class DatasetStats(BaseModel):
    """Counts reported by ``ingest``."""

    users: int
    items: int
    interactions: int
    sparsity: float


# ==========================================
# EXPLANATIONS
# ==========================================


class ExplanationNeighbor(BaseModel):
    """A neighbor of the explained item that the user interacted with."""

    item: int
    item_id: str
    similarity: float = Field(..., ge=0, le=1)


class Explanation(BaseModel):
    """Why an item is explainable to a user: E_ui plus the supporting neighbors."""

    user: int
    user_id: str
    item: int
    item_id: str
    explainability: float = Field(..., ge=0, le=1)
    neighbors: List[ExplanationNeighbor] = Field(default_factory=list)

    @property
    def has_explanation(self) -> bool:
        return self.explainability > 0

    def render(self) -> str:
        if not self.has_explanation:
            return f"{self.item_id}: no item-based explanation"
        liked = ", ".join(f"{n.item_id} ({n.similarity:.3f})" for n in self.neighbors)
        return f"{self.item_id}: E={self.explainability:.4f}; because you liked {liked}"


# ==========================================
# BIAS ORACLE
# ==========================================


class BiasMeasurement(BaseModel):
    """Monte Carlo estimate of an estimator's mean against the ideal loss."""

    kind: str
    n_draws: int
    triples: Literal["admissible", "all"] = "admissible"
    mean: float
    standard_error: float
    ideal: float
    bias: float = Field(..., description="|mean - ideal|")

    @property
    def z_score(self) -> float:
        if self.standard_error == 0:
            return 0.0 if self.bias == 0 else float("inf")
        return self.bias / self.standard_error

    def within(self, threshold: float = ORACLE_Z_THRESHOLD) -> bool:
        """True when the bias is within ``threshold`` standard errors."""
        return self.z_score <= threshold


# ==========================================
# TOOL SCHEMAS
# ==========================================


class RecommendInput(BaseModel):
    """Input schema for ebpr_recommend tool."""

    user_id: str = Field(..., description="Raw user id as it appears in the interaction log")
    k: int = Field(DEFAULT_CUTOFF, description="Number of recommendations (1-100)", ge=1, le=100)


class ExplainInput(BaseModel):
    """Input schema for ebpr_explain tool."""

    user_id: str = Field(..., description="Raw user id as it appears in the interaction log")
    item_id: str = Field(..., description="Raw item id as it appears in the interaction log")


class DatasetStatsInput(BaseModel):
    """Input schema for ebpr_dataset_stats tool (no parameters required)."""

    pass
