from typing import final, override

from scipy.special import expit, log_expit

from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.utils.base_objective import Array, MarginObjective


def _check_epsilon(epsilon: float) -> None:
    if not 0 < epsilon < 0.5:
        error_message = f"rDPO needs 0 < epsilon < 0.5, got {epsilon}."
        raise ValueError(error_message)


@final
class RobustDPO(MarginObjective):
    """Unbiased noisy-label estimator: [-(1 - e) ln sigma(m) + e ln sigma(-m)] / (1 - 2e)."""

    @staticmethod
    @override
    def get_display_name() -> str:
        return "rDPO"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "rdpo"

    @override
    def margin_loss(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        epsilon = config.epsilon
        _check_epsilon(epsilon)
        return (-(1 - epsilon) * log_expit(m) + epsilon * log_expit(-m)) / (1 - 2 * epsilon)

    @override
    def margin_slope(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        epsilon = config.epsilon
        _check_epsilon(epsilon)
        return (-(1 - epsilon) * expit(-m) - epsilon * expit(m)) / (1 - 2 * epsilon)
