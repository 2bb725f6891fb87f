from typing import final, override

import numpy as np
from scipy.special import expit, log_expit

from rosepo_lab.models.bundles import BundleGrad, LogProbBundle
from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.utils.base_objective import Array, BaseObjective, margin


@final
class RPO(BaseObjective):
    """DPO minus alpha times the length-normalized chosen likelihood."""

    @staticmethod
    @override
    def get_display_name() -> str:
        return "RPO"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "rpo"

    @override
    def loss(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> Array:
        return -log_expit(margin(bundle, config.beta)) - config.alpha * np.exp(bundle.lp_w) / bundle.len_w

    @override
    def loss_grad(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> BundleGrad:
        pull = config.beta * expit(-margin(bundle, config.beta))
        return BundleGrad(
            -pull - config.alpha * np.exp(bundle.lp_w) / bundle.len_w, pull, np.zeros_like(bundle.extra_lp)
        )
