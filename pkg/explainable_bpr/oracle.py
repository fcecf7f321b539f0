"""Monte Carlo check of the explainable IPS estimators on synthetic worlds.

A world fixes exposure probabilities theta, relevance probabilities gamma, item
neighborhoods and a scoring model. Interactions are drawn as
``Y = O * R`` with ``O ~ Ber(theta)`` and ``R ~ Ber(gamma)``; the estimators'
Monte Carlo means are then compared against the ideal loss computed from gamma.

Items are grouped into blocks of ``eta + 1``; each item's neighborhood is the
other items of its block, and theta is constant per (user, block). Triples whose
two items lie in different blocks have independent factors, so those are the
``admissible`` triples the estimators are summed over by default.
"""

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np

from .constants import (
    DEFAULT_ORACLE_DRAWS,
    DEFAULT_ORACLE_ETA,
    DEFAULT_ORACLE_ITEMS,
    DEFAULT_ORACLE_USERS,
    MIN_ORACLE_DRAWS,
    ORACLE_DRAW_CHUNK,
    ORACLE_GAMMA_RANGE,
    ORACLE_THETA_RANGE,
    ORACLE_Z_THRESHOLD,
)
from .explainability import ItemNeighborhoods, explainability_from_matrix
from .model import FactorModel, init_model
from .schemas import BiasMeasurement, LossKind

logger = logging.getLogger(__name__)

TripleSet = Literal["admissible", "all"]
ESTIMATORS = (LossKind.PUEBPR, LossKind.UEBPR)

# ==========================================
# WORLDS
# ==========================================


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    """Known exposure and relevance probabilities plus a fixed model."""

    theta: np.ndarray
    gamma: np.ndarray
    blocks: np.ndarray
    neighborhoods: ItemNeighborhoods
    model: FactorModel
    seed: int
    block_constant_theta: bool = True

    @property
    def n_users(self) -> int:
        return self.theta.shape[0]

    @property
    def n_items(self) -> int:
        return self.theta.shape[1]

    @property
    def eta(self) -> int:
        return self.neighborhoods.eta

    def _neighborhood_mean(self, values: np.ndarray) -> np.ndarray:
        return (self.neighborhoods.membership @ values.T).T / self.eta

    def theta_neighborhood(self) -> np.ndarray:
        """Per-(user, item) mean exposure of the item's neighbors."""
        return self._neighborhood_mean(self.theta)

    def ideal_explainability(self) -> np.ndarray:
        """Per-(user, item) mean relevance of the item's neighbors."""
        return self._neighborhood_mean(self.gamma)

    def pair_losses(self, triples: TripleSet = "admissible") -> np.ndarray:
        """``-log sigmoid(f(u, i, j))`` for every (u, i, j), zeroed outside ``triples``."""
        x = self.model.P @ self.model.Q.T
        losses = np.logaddexp(0.0, -(x[:, :, None] - x[:, None, :]))
        if triples == "admissible":
            losses = losses * (self.blocks[:, None] != self.blocks[None, :])
        elif triples != "all":
            raise ValueError(f"Unknown triple set '{triples}'")
        return losses

    @property
    def normalizer(self) -> float:
        return float(self.n_users * self.n_items**2)


def item_blocks(n_items: int, eta: int) -> np.ndarray:
    """Block id per item; blocks hold ``eta + 1`` items, the last absorbs the rest."""
    if n_items < eta + 1:
        raise ValueError(f"Need at least eta + 1 = {eta + 1} items, got {n_items}")
    n_blocks = n_items // (eta + 1)
    return np.minimum(np.arange(n_items) // (eta + 1), n_blocks - 1)


def block_neighborhoods(blocks: np.ndarray, eta: int) -> ItemNeighborhoods:
    """Each item's next ``eta`` block-mates, wrapping around within the block."""
    indptr = [0]
    indices: List[int] = []
    for block in np.unique(blocks):
        members = np.flatnonzero(blocks == block)
        for position in range(members.size):
            chosen = [members[(position + step) % members.size] for step in range(1, eta + 1)]
            indices.extend(chosen)
            indptr.append(len(indices))
    return ItemNeighborhoods(
        eta=eta,
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.asarray(indices, dtype=np.int64),
        similarities=np.ones(len(indices)),
    )


def generate_world(
    n_users: int = DEFAULT_ORACLE_USERS,
    n_items: int = DEFAULT_ORACLE_ITEMS,
    eta: int = DEFAULT_ORACLE_ETA,
    seed: int = 0,
    block_constant_theta: bool = True,
    latent_dim: int = 4,
) -> SyntheticWorld:
    """Draw a world; ``block_constant_theta=False`` breaks the independence premise."""
    blocks = item_blocks(n_items, eta)
    rng = np.random.default_rng(seed)
    low, high = ORACLE_THETA_RANGE
    if block_constant_theta:
        per_block = rng.uniform(low, high, size=(n_users, int(blocks.max()) + 1))
        theta = per_block[:, blocks]
    else:
        theta = rng.uniform(low, high, size=(n_users, n_items))
    gamma = rng.uniform(*ORACLE_GAMMA_RANGE, size=(n_users, n_items))
    model_seed = int(rng.integers(0, 2**31 - 1))
    model = init_model(n_users, n_items, latent_dim, model_seed, scale=1.0, dtype=np.float64)
    return SyntheticWorld(
        theta=theta,
        gamma=gamma,
        blocks=blocks,
        neighborhoods=block_neighborhoods(blocks, eta),
        model=model,
        seed=seed,
        block_constant_theta=block_constant_theta,
    )


# ==========================================
# LOSSES
# ==========================================


def _weighted_sum(left, losses, right, normalizer) -> np.ndarray:
    return np.einsum("...ui,uij,...uj->...", left, losses, right) / normalizer


def ideal_ebpr_loss(world: SyntheticWorld, triples: TripleSet = "admissible") -> float:
    """Relevance-weighted EBPR loss with the ideal explainability matrix."""
    E = world.ideal_explainability()
    left = world.gamma * E
    right = (1.0 - world.gamma) * (1.0 - E)
    return float(_weighted_sum(left, world.pair_losses(triples), right, world.normalizer))


def _estimator_factors(world: SyntheticWorld, Y: np.ndarray, E: np.ndarray, kind: LossKind):
    exposure = Y / world.theta
    if kind is LossKind.PUEBPR:
        return exposure * E, (1.0 - exposure) * (1.0 - E)
    if kind is LossKind.UEBPR:
        theta_n = world.theta_neighborhood()
        return exposure * E / theta_n, (1.0 - exposure) * (1.0 - E / theta_n)
    raise ValueError(f"No full-sum estimator for loss kind {kind.value}")


def empirical_estimator_loss(
    world: SyntheticWorld, Y: np.ndarray, kind: LossKind, triples: TripleSet = "admissible"
) -> float:
    """Estimator value on one interaction draw.

    E is recomputed from ``Y``; theta and the neighborhood propensity are the
    world's true values.
    """
    kind = LossKind(kind)
    E = explainability_from_matrix(Y, world.neighborhoods).dense()
    left, right = _estimator_factors(world, np.asarray(Y, dtype=np.float64), E, kind)
    return float(_weighted_sum(left, world.pair_losses(triples), right, world.normalizer))


def expected_estimator_loss(
    world: SyntheticWorld, kind: LossKind, triples: TripleSet = "admissible"
) -> float:
    """Estimator with Y replaced by its mean and E by ``theta_N * E_ideal``.

    This is the exact expectation over admissible triples; over ``all`` triples
    it ignores the correlation between overlapping factors.
    """
    kind = LossKind(kind)
    mean_y = world.theta * world.gamma
    mean_e = world.theta_neighborhood() * world.ideal_explainability()
    if kind is LossKind.PUEBPR:
        left = mean_y / world.theta * mean_e
        right = (1.0 - mean_y / world.theta) * (1.0 - mean_e)
    else:
        theta_n = world.theta_neighborhood()
        left = mean_y / world.theta * mean_e / theta_n
        right = (1.0 - mean_y / world.theta) * (1.0 - mean_e / theta_n)
    return float(_weighted_sum(left, world.pair_losses(triples), right, world.normalizer))


# ==========================================
# SAMPLING
# ==========================================


def sample_interactions(world: SyntheticWorld, draw_seed: int) -> np.ndarray:
    """One binary interaction matrix ``Y = O * R``."""
    return sample_interaction_draws(world, 1, draw_seed)[0]


def sample_interaction_draws(world: SyntheticWorld, n_draws: int, seed) -> np.ndarray:
    """``n_draws`` independent interaction matrices, shape ``(n_draws, users, items)``."""
    rng = np.random.default_rng(seed)
    shape = (n_draws,) + world.theta.shape
    exposed = rng.random(shape) < world.theta
    relevant = rng.random(shape) < world.gamma
    return (exposed & relevant).astype(np.float64)


def _draw_losses(world, Y, kind, losses) -> np.ndarray:
    E = Y @ world.neighborhoods.membership.toarray().T / world.eta
    left, right = _estimator_factors(world, Y, E, kind)
    return _weighted_sum(left, losses, right, world.normalizer)


def measure_bias(
    world: SyntheticWorld,
    kind: LossKind,
    n_draws: int = DEFAULT_ORACLE_DRAWS,
    seed: int = 0,
    triples: TripleSet = "admissible",
) -> BiasMeasurement:
    """Monte Carlo mean and standard error of an estimator against the ideal loss.

    Draws are generated in fixed-size chunks from spawned seeds, so results do
    not depend on how the work is split.
    """
    kind = LossKind(kind)
    if kind not in ESTIMATORS:
        raise ValueError(f"No full-sum estimator for loss kind {kind.value}")
    if n_draws < MIN_ORACLE_DRAWS:
        raise ValueError(f"n_draws must be >= {MIN_ORACLE_DRAWS}, got {n_draws}")

    losses = world.pair_losses(triples)
    n_chunks = -(-n_draws // ORACLE_DRAW_CHUNK)
    values = []
    for index, child in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        size = min(ORACLE_DRAW_CHUNK, n_draws - index * ORACLE_DRAW_CHUNK)
        Y = sample_interaction_draws(world, size, child)
        values.append(_draw_losses(world, Y, kind, losses))
    values = np.concatenate(values)

    mean = float(values.mean())
    standard_error = float(values.std(ddof=1) / np.sqrt(n_draws))
    ideal = ideal_ebpr_loss(world, triples)
    measurement = BiasMeasurement(
        kind=kind.value,
        n_draws=n_draws,
        triples=triples,
        mean=mean,
        standard_error=standard_error,
        ideal=ideal,
        bias=abs(mean - ideal),
    )
    logger.info(
        "%s: mean=%.6g ideal=%.6g se=%.3g z=%.2f",
        kind.value,
        mean,
        ideal,
        standard_error,
        measurement.z_score,
    )
    return measurement


def render_oracle_report(
    world: SyntheticWorld,
    measurements: List[BiasMeasurement],
    threshold: float = ORACLE_Z_THRESHOLD,
    expected: Optional[dict] = None,
) -> str:
    """Text record of the world and one line per estimator.

    UEBPR passes when its bias is within ``threshold`` standard errors; pUEBPR
    passes when its bias exceeds it.
    """
    lines = [
        f"world users={world.n_users} items={world.n_items} eta={world.eta} "
        f"seed={world.seed} block_constant_theta={world.block_constant_theta}",
        f"{'estimator':<10}{'draws':>8}{'mean':>14}{'ideal':>14}{'stderr':>12}"
        f"{'z':>8}  result",
    ]
    for m in measurements:
        unbiased_expected = m.kind == LossKind.UEBPR.value
        passed = m.within(threshold) if unbiased_expected else not m.within(threshold)
        lines.append(
            f"{m.kind:<10}{m.n_draws:>8}{m.mean:>14.8f}{m.ideal:>14.8f}"
            f"{m.standard_error:>12.3e}{m.z_score:>8.2f}  {'PASS' if passed else 'FAIL'}"
        )
    for kind, value in (expected or {}).items():
        lines.append(f"expected {kind}: {value:.8f}")
    return "\n".join(lines) + "\n"
