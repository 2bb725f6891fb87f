from typing import final, override

import numpy as np
from scipy.special import expit, log_expit, logsumexp, softmax

from rosepo_lab.models.bundles import BundleGrad, LogProbBundle
from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.utils.base_objective import Array, BaseObjective


def _negative_margins(config: ObjectiveConfig, bundle: LogProbBundle) -> Array:
    """Margins of the chosen response against the rejected one and every extra negative, shape (batch, 1 + n)."""
    if bundle.extra_lp.shape[-1] < config.n_negatives - 1:
        error_message = (
            f"S-DPO with {config.n_negatives} negatives needs {config.n_negatives - 1} extra negatives per pair,"
            f" got {bundle.extra_lp.shape[-1]}."
        )
        raise ValueError(error_message)
    lp = np.concatenate([bundle.lp_l[:, None], bundle.extra_lp[:, : config.n_negatives - 1]], axis=1)
    ref_lp = np.concatenate([bundle.ref_lp_l[:, None], bundle.extra_ref_lp[:, : config.n_negatives - 1]], axis=1)
    chosen_ratio = (bundle.lp_w - bundle.ref_lp_w)[:, None]
    return config.beta * chosen_ratio - config.beta * (lp - ref_lp)


@final
class SoftmaxDPO(BaseObjective):
    """Multi-negative DPO: -ln sigma(-ln sum_j exp(-m_j)) over the rejected response and the extra negatives."""

    @staticmethod
    @override
    def get_display_name() -> str:
        return "S-DPO"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "sdpo"

    @override
    def loss(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> Array:
        return -log_expit(-logsumexp(-_negative_margins(config, bundle), axis=1))

    @override
    def loss_grad(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> BundleGrad:
        margins = _negative_margins(config, bundle)
        pressure = expit(logsumexp(-margins, axis=1))
        weights = softmax(-margins, axis=1) * (config.beta * pressure)[:, None]
        used = config.n_negatives - 1
        d_extra = np.zeros_like(bundle.extra_lp)
        d_extra[:, :used] = weights[:, 1:]
        return BundleGrad(-config.beta * pressure, weights[:, 0], d_extra)
