from typing import final, override

from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.utils.base_objective import Array, MarginObjective


@final
class IPO(MarginObjective):
    """Squared regression of the unscaled log-ratio difference onto 1 / (2 tau).

    The difference of log-ratios is the margin divided by beta, so beta cancels out of the regression target.
    """

    @staticmethod
    @override
    def get_display_name() -> str:
        return "IPO"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "ipo"

    @override
    def margin_loss(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        return (m / config.beta - 1 / (2 * config.tau)) ** 2

    @override
    def margin_slope(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        return 2 * (m / config.beta - 1 / (2 * config.tau)) / config.beta
