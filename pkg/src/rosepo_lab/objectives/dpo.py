from typing import final, override

from scipy.special import expit, log_expit

from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.utils.base_objective import Array, MarginObjective


@final
class DPO(MarginObjective):
    """-ln sigma(m)."""

    @staticmethod
    @override
    def get_display_name() -> str:
        return "DPO"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "dpo"

    @override
    def margin_loss(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        return -log_expit(m)

    @override
    def margin_slope(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        return -expit(-m)
