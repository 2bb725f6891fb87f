from typing import final, override

import numpy as np
from scipy.special import expit, log_expit

from rosepo_lab.models.bundles import BundleGrad, LogProbBundle
from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.utils.base_objective import Array, BaseObjective


@final
class CPO(BaseObjective):
    """Reference-free pairwise loss plus a negative log-likelihood term on the chosen response."""

    @staticmethod
    @override
    def get_display_name() -> str:
        return "CPO"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "cpo"

    @override
    def loss(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> Array:
        return -log_expit(config.beta * (bundle.lp_w - bundle.lp_l)) - config.lambda_ * bundle.lp_w

    @override
    def loss_grad(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> BundleGrad:
        pull = config.beta * expit(-config.beta * (bundle.lp_w - bundle.lp_l))
        return BundleGrad(-pull - config.lambda_, pull, np.zeros_like(bundle.extra_lp))
