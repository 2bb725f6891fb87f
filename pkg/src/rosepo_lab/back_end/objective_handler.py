"""Preference objective dispatch.

Resolves `ObjectiveConfig.kind` to the matching plug-in in `rosepo_lab/objectives/` and evaluates it on a bundle.

Usage:
    ```python
    config = ObjectiveConfig(kind="rosepo", beta=0.5)
    values = loss(config, LogProbBundle.of(-1.2, -2.3, -1.5, -2.0), pair_epsilon=0.1)
    ```
"""

from functools import cache

import numpy as np
from numpy.typing import ArrayLike

from rosepo_lab.models.bundles import BundleGrad, LogProbBundle
from rosepo_lab.models.config import ObjectiveConfig
from rosepo_lab.utils.base_objective import Array, BaseObjective
from rosepo_lab.utils.base_objective import margin as bundle_margin
from rosepo_lab.utils.startup import get_objectives


@cache
def _objective_instances() -> dict[str, BaseObjective]:
    return {objective_type.get_cli_name(): objective_type() for objective_type in get_objectives()}


def get_objective(kind: str) -> BaseObjective:
    """Match an objective kind to its plug-in.

    Args:
        kind: Configuration name of the objective.

    Raises:
        ValueError: If no plug-in has that name.

    Returns:
        Objective instance.
    """
    objectives = _objective_instances()
    if kind not in objectives:
        error_message = f'Objective "{kind}" is not one of {", ".join(sorted(objectives))}.'
        raise ValueError(error_message)
    return objectives[kind]


def _epsilon_array(bundle: LogProbBundle, pair_epsilon: ArrayLike | None) -> Array | None:
    if pair_epsilon is None:
        return None
    return np.broadcast_to(np.atleast_1d(np.asarray(pair_epsilon, dtype=np.float64)), bundle.lp_w.shape).copy()


def margin(bundle: LogProbBundle, beta: float) -> Array:
    """Bradley-Terry margin per pair."""
    return bundle_margin(bundle, beta)


def loss(config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: ArrayLike | None = None) -> Array:
    """Per-pair loss of the configured objective.

    Args:
        config: Objective selection and hyperparameters.
        bundle: Log-probabilities.
        pair_epsilon: Per-pair flip-rates (scalar or one per pair); only RosePO reads them.

    Returns:
        Loss per pair.
    """
    return get_objective(config.kind).loss(config, bundle, _epsilon_array(bundle, pair_epsilon))


def loss_grad(config: ObjectiveConfig, bundle: LogProbBundle, pair_epsilon: ArrayLike | None = None) -> BundleGrad:
    """Partial derivatives of the per-pair loss with respect to the policy log-probabilities.

    Args:
        config: Objective selection and hyperparameters.
        bundle: Log-probabilities.
        pair_epsilon: Per-pair flip-rates.

    Returns:
        Gradient per pair.
    """
    return get_objective(config.kind).loss_grad(config, bundle, _epsilon_array(bundle, pair_epsilon))
