"""Preference oracle: a separately trained ranker whose score gap gives each pair's flip-rate.

The oracle shares the policy architecture but trains on the full-catalogue softmax, so its scores are comparable for
any two items, including items outside an example's candidate list.

Usage:
    ```python
    checkpoint, history = train_oracle(examples, catalogue, OracleConfig(epochs=10), console)
    epsilon = flip_rate(checkpoint.model, example, example.target, rejected)
    ```
"""

from collections.abc import Sequence
from math import ceil

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from rosepo_lab.back_end.evaluation import rank_examples
from rosepo_lab.back_end.policy import (
    AdamState,
    Checkpoint,
    PolicyModel,
    adam_step,
    batch_scores,
    catalogue_loss_and_grad,
    forward_scores,
)
from rosepo_lab.models.config import OracleConfig
from rosepo_lab.models.data import SequenceExample
from rosepo_lab.utils.console import Console
from rosepo_lab.utils.constants import EPSILON_CEILING, EPSILON_FLOOR, HISTORY_LENGTH
from rosepo_lab.utils.converters import derive_seed

SHUFFLE_SALT = 0x6F7263
VALIDATION_K = 10


def oracle_hit_ratio(oracle: PolicyModel, examples: Sequence[SequenceExample], k: int = VALIDATION_K) -> float:
    """Fraction of examples whose target the oracle ranks within the top k of the given candidates.

    Args:
        oracle: Oracle model.
        examples: Examples with candidates.
        k: Cutoff.

    Returns:
        HR@k, or 0 for no examples.
    """
    if not examples:
        return 0.0
    return float(np.mean([result.rank_of_target <= k for result in rank_examples(oracle, examples)]))


def train_oracle(
    examples: Sequence[SequenceExample], catalogue: Sequence[str], config: OracleConfig, console: Console
) -> tuple[Checkpoint, pd.DataFrame]:
    """Train the oracle by full-catalogue next-item cross-entropy and keep the best validation epoch.

    Args:
        examples: Prepared examples; the train split trains, the valid split selects the epoch.
        catalogue: Sorted catalogue.
        config: Training options.
        console: Console for progress and per-epoch validation.

    Raises:
        ValueError: If the training split is empty.
        FloatingPointError: If the loss diverges.

    Returns:
        Best checkpoint (stage `oracle`) and a per-epoch frame of `epoch`, `loss`, `valid_hr@10`.
    """
    train = [example for example in examples if example.split == "train"]
    valid = [example for example in examples if example.split == "valid"]
    if not train:
        error_message = "Oracle training needs a nonempty training split."
        raise ValueError(error_message)

    model = PolicyModel.initialize(catalogue, config.width, config.seed)
    histories = np.stack([model.rows(example.history) for example in train])
    targets = model.rows([example.target for example in train])
    state = AdamState()
    batches = ceil(len(train) / config.batch_size)

    best = (-1.0, model.clone(), 0)
    rows: list[tuple[int, float, float]] = []
    with console.progress() as progress:
        task = progress.add_task("ORACLE", total=config.epochs * batches, loss=0.0)
        for epoch in range(config.epochs):
            order = np.random.default_rng(derive_seed(config.seed, SHUFFLE_SALT, epoch)).permutation(len(train))
            losses: list[float] = []
            for start in range(0, len(train), config.batch_size):
                batch = order[start : start + config.batch_size]
                loss, grads = catalogue_loss_and_grad(model, histories[batch], targets[batch])
                if not np.isfinite(loss):
                    error_message = f"Oracle loss diverged at optimizer step {state.step}."
                    raise FloatingPointError(error_message)
                state = adam_step(model, grads, state, config.lr, config.weight_decay)
                losses.append(loss)
                progress.update(task, advance=1, loss=loss)

            hit_ratio = oracle_hit_ratio(model, valid)
            rows.append((epoch + 1, float(np.mean(losses)), hit_ratio))
            console.info_print("ORACLE", f"Epoch {epoch + 1}/{config.epochs}: valid HR@{VALIDATION_K} {hit_ratio:.4f}.")
            # Ties keep the earlier epoch; without validation data the last epoch wins.
            if hit_ratio > best[0] or not valid:
                best = (hit_ratio, model.clone(), state.step)

    console.debug_print("ORACLE", f"Kept the checkpoint after {best[2]} steps.")
    history = pd.DataFrame(rows, columns=["epoch", "loss", f"valid_hr@{VALIDATION_K}"])
    return Checkpoint.of(best[1], "oracle", config.seed, best[2]), history


def score(oracle: PolicyModel, history: Sequence[str], item: str) -> float:
    """Raw oracle score of an item after a history.

    Args:
        oracle: Oracle model.
        history: Exactly 10 item IDs.
        item: Item to score.

    Returns:
        Pre-softmax score.
    """
    return float(forward_scores(oracle, history, [item])[0])


def flip_rate_from_scores(s_w: ArrayLike, s_l: ArrayLike) -> NDArray[np.float64]:
    """exp(s_l) / (exp(s_w) + exp(s_l)), evaluated as sigma(s_l - s_w)."""
    return np.asarray(expit(np.subtract(s_l, s_w, dtype=np.float64)), dtype=np.float64)


def clamp_epsilon(epsilon: ArrayLike) -> NDArray[np.float64]:
    """Clamp flip-rates into [1e-4, 1 - 1e-4]."""
    return np.clip(np.asarray(epsilon, dtype=np.float64), EPSILON_FLOOR, EPSILON_CEILING)


def flip_rate(oracle: PolicyModel, example: SequenceExample, y_w: str, y_l: str) -> float:
    """Probability the oracle prefers y_l over y_w after the example's history.

    Args:
        oracle: Oracle model.
        example: Example supplying the history.
        y_w: Chosen item.
        y_l: Rejected item.

    Raises:
        ValueError: If the two items are the same.

    Returns:
        Flip-rate in (0, 1), unclamped.
    """
    if y_w == y_l:
        error_message = f"Example {example.example_id}: chosen and rejected are both {y_w}."
        raise ValueError(error_message)
    s_w, s_l = forward_scores(oracle, example.history, [y_w, y_l])
    return float(flip_rate_from_scores(s_w, s_l))


def pair_flip_rates(
    oracle: PolicyModel, histories: Sequence[Sequence[str]], chosen: Sequence[str], rejected: Sequence[str]
) -> NDArray[np.float64]:
    """Batched `flip_rate` over many pairs.

    Args:
        oracle: Oracle model.
        histories: One 10-item history per pair.
        chosen: Chosen item per pair.
        rejected: Rejected item per pair.

    Returns:
        Unclamped flip-rates.
    """
    if not histories:
        return np.zeros(0)
    if any(len(history) != HISTORY_LENGTH for history in histories):
        error_message = f"Every history must hold {HISTORY_LENGTH} items."
        raise ValueError(error_message)
    rows = np.stack([oracle.rows(history) for history in histories])
    pairs = np.stack([oracle.rows(chosen), oracle.rows(rejected)], axis=1)
    scores, _ = batch_scores(oracle, rows, pairs)
    return flip_rate_from_scores(scores[:, 0], scores[:, 1])
