from typing import final, override

import numpy as np
from scipy.special import expit, log_expit

from rosepo_lab.models.bundles import BundleGrad, LogProbBundle
from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.utils.base_objective import Array, BaseObjective


def _reward_gap(config: ObjectiveConfig, bundle: LogProbBundle) -> Array:
    return config.beta * bundle.lp_w / bundle.len_w - config.beta * bundle.lp_l / bundle.len_l - config.gamma


@final
class SimPO(BaseObjective):
    """Length-normalized, reference-free margin with a target reward gap gamma.

    With single-item responses (length 1) this is reference-free DPO shifted by gamma.
    """

    @staticmethod
    @override
    def get_display_name() -> str:
        return "SimPO"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "simpo"

    @override
    def loss(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> Array:
        return -log_expit(_reward_gap(config, bundle))

    @override
    def loss_grad(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> BundleGrad:
        pull = expit(-_reward_gap(config, bundle)) * config.beta
        return BundleGrad(-pull / bundle.len_w, pull / bundle.len_l, np.zeros_like(bundle.extra_lp))
