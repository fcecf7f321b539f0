import logging

import numpy as np
import pytest

from explainable_bpr.dataset import InteractionDataset
from explainable_bpr.experiment import (
    ExperimentInputs,
    PhaseInputs,
    configuration_grid,
    hyperparameter_search,
    retrain_merged,
    run_replicates,
    sparsity_study,
    summarize,
    sweep_eta,
)
from explainable_bpr.schemas import EvalReport, LossKind, TrainingConfig
from explainable_bpr.training import TrainingHistory


class DummyTrainer:
    """Records calls; validation NDCG is looked up by latent dimension."""

    def __init__(self, scores=None):
        self.scores = scores or {}
        self.calls = []

    def __call__(self, split, config, E=None, propensity=None):
        self.calls.append((split, config, E, propensity))
        ndcg = self.scores.get(config.latent_dim, 0.1)
        history = TrainingHistory(losses=[1.0, 0.5], validation_ndcg=[ndcg / 2, ndcg])
        return config.seed, history


class DummyEvaluator:
    """Reports ``hr`` from a per-seed table; the trainer returns the seed as model."""

    def __init__(self, values):
        self.values = values

    def __call__(self, model, split, E, propensity, k_cut=10, loss=None):
        return EvalReport(cutoff=k_cut, loss=loss, seed=model, metrics={"hr": self.values[model]})


def _empty_inputs():
    phase = PhaseInputs(neighborhoods=None, explainability=None, propensity=None)
    return ExperimentInputs(training=phase, evaluation=phase)


# ==========================================
# HYPERPARAMETER SEARCH
# ==========================================


def test_configuration_grid_size():
    grid = configuration_grid()
    assert len(grid) == 5 * 3 * 3
    assert {"latent_dim": 20, "batch_size": 100, "l2": 0.0} in grid


def test_single_configuration_grid(toy_split):
    trainer = DummyTrainer()
    grid = [{"latent_dim": 7, "batch_size": 50, "l2": 0.0}]
    result = hyperparameter_search(
        toy_split, TrainingConfig(), n_configs=1, replicates=2, grid=grid, trainer=trainer
    )
    assert result.best_config.latent_dim == 7
    assert result.best_epoch == 2
    assert len(trainer.calls) == 2


class DummyPeakTrainer:
    """Validation NDCG peaks at the next epoch from ``peaks`` on every call."""

    def __init__(self, peaks):
        self.peaks = list(peaks)

    def __call__(self, split, config, E=None, propensity=None):
        ndcg = [0.1] * 6
        ndcg[self.peaks.pop(0) - 1] = 0.5
        return config.seed, TrainingHistory(losses=[1.0] * 6, validation_ndcg=ndcg)


@pytest.mark.parametrize("peaks,expected", [([1, 4, 5], 4), ([2, 5], 4), ([3], 3)])
def test_best_epoch_is_median_over_replicates(toy_split, peaks, expected):
    grid = [{"latent_dim": 7, "batch_size": 50, "l2": 0.0}]
    result = hyperparameter_search(
        toy_split,
        TrainingConfig(),
        n_configs=1,
        replicates=len(peaks),
        grid=grid,
        trainer=DummyPeakTrainer(peaks),
    )
    assert result.best_epoch == expected


def test_search_selects_best_validation_score(toy_split):
    trainer = DummyTrainer(scores={5: 0.2, 10: 0.6, 20: 0.4})
    grid = configuration_grid(latent_dims=[5, 10, 20], batch_sizes=[100], l2_values=[0.0])
    result = hyperparameter_search(
        toy_split, TrainingConfig(), n_configs=3, replicates=1, grid=grid, trainer=trainer
    )
    assert result.best_config.latent_dim == 10
    assert [trial.mean_score for trial in result.trials if trial.config.latent_dim == 10] == [0.6]


def test_search_is_deterministic(toy_split):
    picks = []
    for _ in range(2):
        trainer = DummyTrainer()
        result = hyperparameter_search(
            toy_split, TrainingConfig(), n_configs=4, replicates=1, seed=3, trainer=trainer
        )
        picks.append([trial.config.model_dump() for trial in result.trials])
        picks.append([call[1].seed for call in trainer.calls])
    assert picks[0] == picks[2]
    assert picks[1] == picks[3]


def test_small_grid_warns_and_samples_all(toy_split, caplog):
    grid = configuration_grid(latent_dims=[5, 10], batch_sizes=[100], l2_values=[0.0])
    with caplog.at_level(logging.WARNING):
        result = hyperparameter_search(
            toy_split,
            TrainingConfig(),
            n_configs=5,
            replicates=1,
            grid=grid,
            trainer=DummyTrainer(),
        )
    assert len(result.trials) == 2
    assert "fewer than 5" in caplog.text


def test_search_passes_precomputed_inputs(toy_split):
    trainer = DummyTrainer()
    hyperparameter_search(
        toy_split,
        TrainingConfig(loss=LossKind.EBPR),
        n_configs=1,
        replicates=1,
        E="E",
        propensity="theta",
        trainer=trainer,
    )
    _, config, E, propensity = trainer.calls[0]
    assert (config.loss, E, propensity) == (LossKind.EBPR, "E", "theta")


def test_retrain_merged_uses_fixed_epochs(toy_split):
    trainer = DummyTrainer()
    retrain_merged(toy_split, TrainingConfig(), 7, trainer=trainer)
    split, config, _, _ = trainer.calls[0]
    assert not split.has_validation
    assert config.max_epochs == 7
    assert not config.early_stopping


# ==========================================
# REPLICATES AND SWEEPS
# ==========================================


def test_replicate_mean_of_stubbed_scores(toy_split):
    summary = run_replicates(
        toy_split,
        TrainingConfig(seed=10),
        n=2,
        inputs=_empty_inputs(),
        trainer=DummyTrainer(),
        evaluator=DummyEvaluator({10: 0.2, 11: 0.4}),
    )
    assert summary.n == 2
    assert summary.mean["hr"] == pytest.approx(0.3)
    assert summary.std["hr"] == pytest.approx(0.1)
    assert summary.loss == "BPR"


def test_single_replicate_equals_run(toy_split):
    summary = run_replicates(
        toy_split,
        TrainingConfig(seed=0),
        n=1,
        inputs=_empty_inputs(),
        trainer=DummyTrainer(),
        evaluator=DummyEvaluator({0: 0.7}),
    )
    assert summary.mean["hr"] == 0.7
    assert summary.std["hr"] == 0.0


def test_replicates_are_repeatable(toy_split):
    values = {seed: 0.1 * seed for seed in range(5)}
    means = [
        run_replicates(
            toy_split,
            TrainingConfig(),
            n=5,
            inputs=_empty_inputs(),
            trainer=DummyTrainer(),
            evaluator=DummyEvaluator(values),
        ).mean
        for _ in range(2)
    ]
    assert means[0] == means[1]


def test_merged_replicates_recompute_training_inputs(toy_split):
    trainer = DummyTrainer()
    run_replicates(
        toy_split,
        TrainingConfig(eta=3),
        n=1,
        inputs=_empty_inputs(),
        best_epoch=4,
        trainer=trainer,
        evaluator=DummyEvaluator({0: 0.5}),
    )
    split, config, E, propensity = trainer.calls[0]
    assert not split.has_validation
    assert config.max_epochs == 4
    assert E.shape == (toy_split.n_users, toy_split.n_items)
    assert propensity.eta == 3


def test_summarize_population_std():
    reports = [EvalReport(metrics={"ndcg": value}) for value in (0.1, 0.3, 0.5)]
    summary = summarize(reports, loss="EBPR")
    assert summary.mean["ndcg"] == pytest.approx(0.3)
    assert summary.std["ndcg"] == pytest.approx(np.std([0.1, 0.3, 0.5]))


def test_sweep_recomputes_inputs_per_eta(toy_split):
    trainer = DummyTrainer()
    results = sweep_eta(
        toy_split,
        TrainingConfig(),
        etas=[2, 4],
        n=1,
        trainer=trainer,
        evaluator=DummyEvaluator({0: 0.5}),
    )
    assert sorted(results) == [2, 4]
    assert [call[2].eta for call in trainer.calls] == [2, 4]
    assert [call[1].eta for call in trainer.calls] == [2, 4]


def test_experiment_inputs_share_training_propensity(toy_split):
    inputs = ExperimentInputs.for_split(toy_split, TrainingConfig(eta=3))
    assert inputs.evaluation.propensity is inputs.training.propensity
    assert inputs.training.explainability.source == "training"
    assert inputs.evaluation.explainability.source == "evaluation"


def test_sparsity_study_rows(toy_dataset):
    rows = sparsity_study(toy_dataset, thresholds=[1, 3, 5], eta=3)
    assert [row.threshold for row in rows] == [1, 3, 5]
    interactions = [row.interactions for row in rows]
    assert interactions == sorted(interactions, reverse=True)
    for row in rows:
        assert 0.0 <= row.average_explainability <= 1.0


def test_sparsity_study_drops_rare_items():
    Y = np.array([[1, 1, 0], [1, 0, 0], [1, 0, 1]])
    rows = sparsity_study(InteractionDataset.from_matrix(Y), thresholds=[1, 2], eta=1)
    assert [row.items for row in rows] == [3, 1]
    assert rows[1].sparsity == 0.0
