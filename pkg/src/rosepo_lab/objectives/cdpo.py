from typing import final, override

from numpy.typing import ArrayLike
from scipy.special import expit, log_expit

from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.utils.base_objective import Array, MarginObjective


def smoothed_loss(m: Array, epsilon: ArrayLike) -> Array:
    """Cross entropy of sigma(m) against the target 1 - epsilon."""
    return -(1 - epsilon) * log_expit(m) - epsilon * log_expit(-m)  # pyright: ignore [reportOperatorIssue]


def smoothed_slope(m: Array, epsilon: ArrayLike) -> Array:
    """Derivative of `smoothed_loss` with respect to m: sigma(m) - (1 - epsilon)."""
    return expit(m) - (1 - epsilon)  # pyright: ignore [reportOperatorIssue]


@final
class ConservativeDPO(MarginObjective):
    """DPO with a fixed label-smoothing flip-rate from the configuration."""

    @staticmethod
    @override
    def get_display_name() -> str:
        return "cDPO"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "cdpo"

    @override
    def margin_loss(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        return smoothed_loss(m, config.epsilon)

    @override
    def margin_slope(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        return smoothed_slope(m, config.epsilon)
