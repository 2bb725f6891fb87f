"""Preference objectives available to the preference-optimization stage.

Definition of the methods an objective class must implement to be picked up by the objective handler.

Usage:
    Implement BaseObjective (or MarginObjective for losses that depend only on the DPO margin) in a module under
    `rosepo_lab/objectives/` and it becomes selectable through `ObjectiveConfig.kind`.
"""

from abc import ABC, abstractmethod
from typing import override

import numpy as np
from numpy.typing import NDArray

from rosepo_lab.models.bundles import BundleGrad, LogProbBundle
from rosepo_lab.models.config import ObjectiveConfig

Array = NDArray[np.float64]


def margin(bundle: LogProbBundle, beta: float) -> Array:
    """Bradley-Terry margin beta * (log-ratio of chosen) - beta * (log-ratio of rejected).

    Args:
        bundle: Log-probabilities.
        beta: Deviation strength.

    Returns:
        Margin per pair.
    """
    return beta * (bundle.lp_w - bundle.ref_lp_w) - beta * (bundle.lp_l - bundle.ref_lp_l)


class BaseObjective(ABC):
    """Base class to enforce the loss interface. Every method is vectorized over the bundle's batch."""

    @staticmethod
    @abstractmethod
    def get_display_name() -> str:
        """Get the display name of the objective.

        Returns:
            Name used in reports.
        """

    @staticmethod
    @abstractmethod
    def get_cli_name() -> str:
        """Get the name of the objective for configuration files and the CLI.

        Returns:
            Value of `ObjectiveConfig.kind` that selects this objective.
        """

    @abstractmethod
    def loss(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> Array:
        """Per-pair loss.

        Args:
            config: Objective hyperparameters.
            bundle: Log-probabilities.
            pair_epsilon: Per-pair flip-rates (only consulted by objectives that use them).

        Returns:
            Loss per pair.
        """

    @abstractmethod
    def loss_grad(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> BundleGrad:
        """Exact partial derivatives of the per-pair loss with respect to the policy log-probabilities.

        Args:
            config: Objective hyperparameters.
            bundle: Log-probabilities.
            pair_epsilon: Per-pair flip-rates.

        Returns:
            Gradient per pair.
        """


class MarginObjective(BaseObjective):
    """Objective that is a function of the margin alone."""

    @abstractmethod
    def margin_loss(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        """Loss as a function of the margin."""

    @abstractmethod
    def margin_slope(self, config: ObjectiveConfig, m: Array, pair_epsilon: Array | None) -> Array:
        """Derivative of `margin_loss` with respect to the margin."""

    @override
    def loss(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> Array:
        return self.margin_loss(config, margin(bundle, config.beta), pair_epsilon)

    @override
    def loss_grad(self, config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: Array | None) -> BundleGrad:
        slope = self.margin_slope(config, margin(bundle, config.beta), pair_epsilon)
        return BundleGrad(config.beta * slope, -config.beta * slope, np.zeros_like(bundle.extra_lp))
