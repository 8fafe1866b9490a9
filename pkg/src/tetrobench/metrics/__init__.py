"""Exact optimal transport and explanation quality scores."""

from .scores import (MetricResult, emd_score, ima_score, max_pixel_distance, precision_score,
                     score_all, score_map)
from .transport import MassDistribution, euclidean_costs, optimal_transport_cost, transport_plan

__all__ = [
    "MetricResult", "emd_score", "ima_score", "max_pixel_distance", "precision_score",
    "score_all", "score_map", "MassDistribution", "euclidean_costs", "optimal_transport_cost",
    "transport_plan",
]
