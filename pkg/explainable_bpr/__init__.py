"""Explainable and debiased Bayesian Personalized Ranking.

Train matrix factorization recommenders whose pairwise loss is weighted by
neighborhood-based explainability, optionally corrected for exposure bias with
inverse propensity scoring, and explain every recommendation through the
similar items a user already interacted with.

Example:
    ```python
    from explainable_bpr import (
        ExperimentInputs,
        LossKind,
        TrainingConfig,
        binarize_and_index,
        evaluate_model,
        filter_min_interactions,
        load_interactions,
        loo_split,
        train,
    )

    records, _ = load_interactions("ml-100k/u.data")
    ds = filter_min_interactions(binarize_and_index(records))
    split = loo_split(ds, seed=0)

    config = TrainingConfig(loss=LossKind.EBPR, eta=20)
    inputs = ExperimentInputs.for_split(split, config)
    model, history = train(
        split, config, inputs.training.explainability, inputs.training.propensity
    )
    report = evaluate_model(
        model, split, inputs.evaluation.explainability, inputs.evaluation.propensity
    )
    ```
"""

from .constants import PACKAGE_VERSION
from .dataset import (
    InteractionDataset,
    LooSplit,
    binarize_and_index,
    dataset_stats,
    filter_min_interactions,
    filter_min_item_interactions,
    load_interactions,
    loo_split,
    sample_training_triples,
)
from .errors import ConfigurationError, DataError, ExplainableBPRError, NumericError, UsageError
from .evaluation import (
    evaluate_explainability,
    evaluate_model,
    evaluate_popularity,
    evaluate_ranking,
    evaluate_unbiased_testset,
)
from .experiment import (
    ExperimentInputs,
    hyperparameter_search,
    retrain_merged,
    run_replicates,
    sparsity_study,
    sweep_eta,
)
from .explainability import (
    ExplainabilityMatrix,
    ItemNeighborhoods,
    average_explainability,
    build_explainability,
    build_neighborhoods,
    cosine_item_similarity,
    explain_recommendation,
    explainability_for_phase,
)
from .model import FactorModel, init_model, preference, recommend, score, top_k
from .oracle import generate_world, ideal_ebpr_loss, measure_bias
from .propensity import (
    PropensityModel,
    build_propensity,
    clamp_propensity,
    estimate_item_propensity,
    neighborhood_propensity,
)
from .schemas import EvalReport, Explanation, LossKind, RunConfig, TrainingConfig
from .service import RecommenderService
from .toolkit import RecommenderToolkit
from .training import instance_weight, train, triple_gradient, triple_loss

__version__ = PACKAGE_VERSION
__all__ = [
    "RecommenderToolkit",
    "RecommenderService",
    "LossKind",
    "TrainingConfig",
    "RunConfig",
    "EvalReport",
    "Explanation",
    "InteractionDataset",
    "LooSplit",
    "load_interactions",
    "binarize_and_index",
    "filter_min_interactions",
    "filter_min_item_interactions",
    "dataset_stats",
    "loo_split",
    "sample_training_triples",
    "ItemNeighborhoods",
    "ExplainabilityMatrix",
    "cosine_item_similarity",
    "build_neighborhoods",
    "build_explainability",
    "explainability_for_phase",
    "average_explainability",
    "explain_recommendation",
    "PropensityModel",
    "estimate_item_propensity",
    "neighborhood_propensity",
    "clamp_propensity",
    "build_propensity",
    "FactorModel",
    "init_model",
    "score",
    "preference",
    "top_k",
    "recommend",
    "instance_weight",
    "triple_loss",
    "triple_gradient",
    "train",
    "evaluate_ranking",
    "evaluate_explainability",
    "evaluate_popularity",
    "evaluate_unbiased_testset",
    "evaluate_model",
    "ExperimentInputs",
    "hyperparameter_search",
    "retrain_merged",
    "run_replicates",
    "sweep_eta",
    "sparsity_study",
    "generate_world",
    "ideal_ebpr_loss",
    "measure_bias",
    "ExplainableBPRError",
    "UsageError",
    "ConfigurationError",
    "DataError",
    "NumericError",
]
