"""Item and neighborhood propensity estimates for the debiased losses."""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from .constants import DEFAULT_PROPENSITY_FLOOR
from .dataset import InteractionDataset
from .errors import DataError
from .explainability import ItemNeighborhoods
from .schemas import PropensityVariant

logger = logging.getLogger(__name__)


def estimate_item_propensity(ds: InteractionDataset) -> np.ndarray:
    """Popularity-based exposure estimate ``sqrt(count_i / max_j count_j)``.

    Raises:
        DataError: If ``ds`` has no interactions
    """
    counts = ds.item_counts().astype(np.float64)
    if counts.size == 0 or counts.max() == 0:
        raise DataError("Cannot estimate propensity from an empty dataset", code="EMPTY_DATASET")
    return np.sqrt(counts / counts.max())


def neighborhood_propensity(
    theta: np.ndarray,
    neighborhoods: ItemNeighborhoods,
    variant: PropensityVariant = "neighbor_sum",
) -> np.ndarray:
    """Aggregate item propensities over each item's neighborhood.

    ``neighbor_sum`` adds the neighbors' propensities; ``neighbor_mean`` divides
    that sum by eta. Items without neighbors get 0 in both forms.
    """
    summed = neighborhoods.membership @ np.asarray(theta, dtype=np.float64)
    if variant == "neighbor_sum":
        return summed
    if variant == "neighbor_mean":
        return summed / neighborhoods.eta
    raise ValueError(f"Unknown propensity variant '{variant}'")


def clamp_propensity(
    theta: Union[float, np.ndarray], floor: float = DEFAULT_PROPENSITY_FLOOR
) -> Union[float, np.ndarray]:
    """Lower-bound propensities before they are used as denominators."""
    if floor <= 0:
        raise ValueError(f"Propensity floor must be > 0, got {floor}")
    clamped = np.maximum(theta, floor)
    return float(clamped) if np.ndim(clamped) == 0 else clamped


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """Item and neighborhood propensities with the floor applied on access."""

    item_propensity: np.ndarray
    neighborhood_propensity: np.ndarray
    eta: int
    variant: str = "neighbor_sum"
    floor: float = DEFAULT_PROPENSITY_FLOOR

    def item_denominator(self, items) -> np.ndarray:
        return clamp_propensity(self.item_propensity[items], self.floor)

    def neighborhood_denominator(self, items) -> np.ndarray:
        return clamp_propensity(self.neighborhood_propensity[items], self.floor)

    @classmethod
    def constant(cls, n_items: int, eta: int, value: float = 1.0) -> "PropensityModel":
        """Uniform propensities; UEBPR then reduces to EBPR and UBPR to BPR."""
        ones = np.full(n_items, value, dtype=np.float64)
        return cls(item_propensity=ones, neighborhood_propensity=ones.copy(), eta=eta)


def build_propensity(
    ds: InteractionDataset,
    neighborhoods: ItemNeighborhoods,
    variant: PropensityVariant = "neighbor_sum",
    floor: float = DEFAULT_PROPENSITY_FLOOR,
) -> PropensityModel:
    theta = estimate_item_propensity(ds)
    theta_n = neighborhood_propensity(theta, neighborhoods, variant)
    clamped = int((theta_n < floor).sum())
    if clamped:
        logger.info("%d neighborhood propensities raised to floor %g", clamped, floor)
    return PropensityModel(
        item_propensity=theta,
        neighborhood_propensity=theta_n,
        eta=neighborhoods.eta,
        variant=variant,
        floor=floor,
    )
