"""Personalized smoothing: the conservative loss with each pair's own flip-rate."""

from typing import final, override

import numpy as np

from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.objectives.cdpo import smoothed_loss, smoothed_slope
from rosepo_lab.utils.base_objective import Array, MarginObjective


def _require_epsilon(pair_epsilon: Array | None) -> Array:
    if pair_epsilon is None:
        error_message = "RosePO needs a per-pair epsilon; attach the preference oracle's flip-rates first."
        raise ValueError(error_message)
    if not bool(np.all((pair_epsilon >= 0) & (pair_epsilon < 1))):
        error_message = "Per-pair epsilon must lie in [0, 1)."
        raise ValueError(error_message)
    return pair_epsilon


@final
class RosePO(MarginObjective):
    """Cross entropy of sigma(m) against the personalized target 1 - epsilon_phi."""

    @staticmethod
    @override
    def get_display_name() -> str:
        return "RosePO"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "rosepo"

    @override
    def margin_loss(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        return smoothed_loss(m, _require_epsilon(pair_epsilon))

    @override
    def margin_slope(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        return smoothed_slope(m, _require_epsilon(pair_epsilon))
