"""Two-stage training: supervised fine-tuning, then preference optimization against a frozen reference.

Responsible for batching, learning-rate warm-up, gradient accumulation, data-fraction subsets, and hyperparameter
sweeps. All randomness derives from the run seed.

Usage:
    ```python
    trainer = Trainer(console)
    sft = trainer.train_sft(config, examples, catalogue)
    po = trainer.train_po(config.with_overrides({"stage": "po", "lr": 1e-4}), pairs, sft.checkpoint)
    ```
"""

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from itertools import product
from math import ceil
from pathlib import Path
from typing import final

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.special import logsumexp

from rosepo_lab.back_end.evaluation import hr_ndcg, metric_value, rank_examples
from rosepo_lab.back_end.objective_handler import loss, loss_grad, margin
from rosepo_lab.back_end.policy import (
    AdamState,
    Checkpoint,
    ForwardCache,
    Gradients,
    PolicyModel,
    adam_step,
    backward,
    batch_scores,
    candidate_positions,
    example_arrays,
    sft_loss_and_grad,
)
from rosepo_lab.models.bundles import LogProbBundle
from rosepo_lab.models.config import ObjectiveConfig, RunConfig
from rosepo_lab.models.data import PreferencePair, SequenceExample
from rosepo_lab.utils.console import Console
from rosepo_lab.utils.converters import derive_seed

PO_LEARNING_RATE = 1e-4
FRACTION_SALT = 0x667263
SHUFFLE_SALT = 0x736866
METRIC_NAMES = ("hr", "ndcg")


def data_subset(count: int, fraction: float, seed: int) -> NDArray[np.intp]:
    """Indices of a seed-determined subset holding ceil(fraction * count) items.

    Subsets for the same seed are nested: a smaller fraction keeps a prefix of the same permutation.

    Args:
        count: Number of items.
        fraction: Fraction in (0, 1].
        seed: Run seed.

    Returns:
        Sorted indices.
    """
    order = np.random.default_rng(derive_seed(seed, FRACTION_SALT)).permutation(count)
    return np.sort(order[: ceil(fraction * count)])


def warmup_lr(lr: float, step: int, total_steps: int, warmup_fraction: float) -> float:
    """Learning rate rising linearly over the first warmup_fraction of steps, then constant.

    Args:
        lr: Peak learning rate.
        step: Zero-based optimizer step.
        total_steps: Optimizer steps in the run.
        warmup_fraction: Fraction of steps spent warming up.

    Returns:
        Learning rate for the step.
    """
    if warmup_fraction <= 0:
        return lr
    warm_steps = max(1, ceil(warmup_fraction * total_steps))
    return lr * min(1.0, (step + 1) / warm_steps)


def parse_metric(metric: str) -> tuple[str, int]:
    """Split a metric name such as `hr@1` or `ndcg@10`.

    Raises:
        ValueError: If the name is not `hr@K` or `ndcg@K` with a positive K.
    """
    name, _, cutoff = metric.lower().partition("@")
    if name not in METRIC_NAMES or not cutoff.isdigit() or int(cutoff) < 1:
        error_message = f'Metric "{metric}" should look like hr@1 or ndcg@10.'
        raise ValueError(error_message)
    return name, int(cutoff)


# Preference optimization.


@dataclass(frozen=True)
class PairBatch:
    """Log-probabilities of a batch of preference pairs under the policy and the reference."""

    bundle: LogProbBundle
    pair_epsilon: NDArray[np.float64] | None
    log_probs: NDArray[np.float64]
    positions: tuple[NDArray[np.intp], NDArray[np.intp], NDArray[np.intp]]


def _extra_negatives(pairs: Sequence[PreferencePair], count: int) -> NDArray[np.intp]:
    positions: list[list[int]] = []
    for pair in pairs:
        if len(pair.negatives) < count:
            error_message = (
                f"Example {pair.example.example_id} carries {len(pair.negatives)} extra negatives, {count} are needed;"
                " rebuild the preferences with more negatives."
            )
            raise ValueError(error_message)
        positions.append([pair.example.candidates.index(item_id) for item_id in pair.negatives[:count]])
    return np.array(positions, dtype=np.intp).reshape(len(pairs), count)


def pair_batch(
    model: PolicyModel, reference: PolicyModel, pairs: Sequence[PreferencePair], config: ObjectiveConfig
) -> tuple[PairBatch, NDArray[np.float64], ForwardCache]:
    """Score pairs with both models and assemble the objective's bundle.

    Args:
        model: Trainable policy.
        reference: Frozen reference.
        pairs: Nonempty pairs with candidate lists of equal size.
        config: Objective; S-DPO reads n_negatives - 1 extra negatives per pair.

    Returns:
        Pair batch, the policy's softmax probabilities, and the policy forward cache.
    """
    examples = [pair.example for pair in pairs]
    histories, candidates = example_arrays(model, examples)
    scores, cache = batch_scores(model, histories, candidates)
    ref_scores, _ = batch_scores(reference, histories, candidates)
    log_probs = scores - logsumexp(scores, axis=1, keepdims=True)
    ref_log_probs = ref_scores - logsumexp(ref_scores, axis=1, keepdims=True)

    rows = np.arange(len(pairs))
    chosen = candidate_positions(examples, [pair.chosen for pair in pairs])
    rejected = candidate_positions(examples, [pair.rejected for pair in pairs])
    extras = _extra_negatives(pairs, config.n_negatives - 1 if config.kind == "sdpo" else 0)
    ones = np.ones(len(pairs))
    bundle = LogProbBundle(
        lp_w=log_probs[rows, chosen],
        lp_l=log_probs[rows, rejected],
        ref_lp_w=ref_log_probs[rows, chosen],
        ref_lp_l=ref_log_probs[rows, rejected],
        len_w=ones,
        len_l=ones.copy(),
        extra_lp=log_probs[rows[:, None], extras],
        extra_ref_lp=ref_log_probs[rows[:, None], extras],
    )
    epsilons = [pair.epsilon for pair in pairs]
    pair_epsilon = None if any(value is None for value in epsilons) else np.array(epsilons, dtype=np.float64)
    batch = PairBatch(bundle, pair_epsilon, log_probs, (chosen, rejected, extras))
    return batch, np.exp(log_probs), cache


def pair_margins(
    model: PolicyModel, reference: PolicyModel, pairs: Sequence[PreferencePair], beta: float
) -> NDArray[np.float64]:
    """Bradley-Terry margin of each pair under a policy and its reference."""
    batch, _, _ = pair_batch(model, reference, pairs, ObjectiveConfig(kind="dpo", beta=beta))
    return margin(batch.bundle, beta)


def po_loss_and_grad(
    model: PolicyModel, reference: PolicyModel, pairs: Sequence[PreferencePair], config: ObjectiveConfig
) -> tuple[float, Gradients]:
    """Mean preference loss over a batch and its gradient with respect to the policy parameters.

    Args:
        model: Trainable policy.
        reference: Frozen reference; receives no gradient.
        pairs: Nonempty pairs.
        config: Objective.

    Returns:
        Loss and gradient per parameter.
    """
    batch, probs, cache = pair_batch(model, reference, pairs, config)
    losses = loss(config, batch.bundle, batch.pair_epsilon)
    grad = loss_grad(config, batch.bundle, batch.pair_epsilon)

    rows = np.arange(len(pairs))
    chosen, rejected, extras = batch.positions
    d_log_probs = np.zeros_like(batch.log_probs)
    np.add.at(d_log_probs, (rows, chosen), grad.d_lp_w)
    np.add.at(d_log_probs, (rows, rejected), grad.d_lp_l)
    if extras.shape[1]:
        used = extras.shape[1]
        np.add.at(d_log_probs, (np.repeat(rows, used), extras.ravel()), grad.d_extra_lp[:, :used].ravel())
    # d log p_y / d s_j = [y = j] - p_j.
    d_scores = d_log_probs - probs * d_log_probs.sum(axis=1, keepdims=True)
    d_scores /= len(pairs)
    return float(losses.mean()), backward(model, cache, d_scores)


# Runs.


@dataclass(frozen=True)
class TrainingResult:
    """Checkpoint and per-step metrics (`step`, `loss`, `lr`) of one run."""

    checkpoint: Checkpoint
    metrics: pd.DataFrame


@dataclass(frozen=True)
class SweepResult:
    """Selected configuration and one report row per grid cell."""

    best: RunConfig
    report: pd.DataFrame


def accumulate_gradients(parts: Sequence[tuple[int, float, Gradients]]) -> tuple[float, Gradients]:
    """Combine micro-batch means into the mean over every item of the group.

    Args:
        parts: Item count, mean loss, and mean gradient of each micro-batch.

    Returns:
        Item-weighted mean loss and gradient.
    """
    count = sum(size for size, _, _ in parts)
    loss = sum(size * batch_loss for size, batch_loss, _ in parts) / count
    total: Gradients = {}
    for size, _, grads in parts:
        for name, value in grads.items():
            if name in total:
                total[name] += size * value
            else:
                total[name] = size * value
    return float(loss), {name: value / count for name, value in total.items()}


def write_metrics(metrics: pd.DataFrame, path: Path) -> None:
    """Write step metrics as CSV with six decimals."""
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


@final
class Trainer:
    """Runs training stages and sweeps, reporting through the console."""

    def __init__(self, console: Console) -> None:
        """Initialize trainer.

        Args:
            console: Console instance.
        """
        self._console = console

    def train_sft(
        self, config: RunConfig, examples: Sequence[SequenceExample], catalogue: Sequence[str]
    ) -> TrainingResult:
        """Maximum-likelihood training of a fresh policy on the training split.

        Args:
            config: Run configuration.
            examples: Prepared examples; only the train split is used.
            catalogue: Sorted catalogue.

        Raises:
            ValueError: If the training split is empty.
            FloatingPointError: If the loss diverges.

        Returns:
            Checkpoint with stage `sft` and step metrics.
        """
        train = [example for example in examples if example.split == "train"]
        if not train:
            error_message = "SFT needs a nonempty training split."
            raise ValueError(error_message)
        model = PolicyModel.initialize(catalogue, config.width, config.seed)
        steps, metrics = self._optimize("SFT", model, train, lambda batch: sft_loss_and_grad(model, batch), config)
        return TrainingResult(Checkpoint.of(model, "sft", config.seed, steps), metrics)

    def train_po(self, config: RunConfig, pairs: Sequence[PreferencePair], sft: Checkpoint) -> TrainingResult:
        """Preference optimization of a copy of the SFT policy against a frozen copy.

        Args:
            config: Run configuration with the objective.
            pairs: Preference pairs.
            sft: SFT checkpoint.

        Raises:
            ValueError: If the checkpoint is not an SFT checkpoint or the pairs lack a needed flip-rate.
            FloatingPointError: If the loss diverges.
            RuntimeError: If the reference changed during training.

        Returns:
            Checkpoint with stage `po` and step metrics.
        """
        if sft.meta.stage != "sft":
            error_message = f"Preference optimization starts from an SFT checkpoint, got stage {sft.meta.stage}."
            raise ValueError(error_message)
        if config.objective.kind == "rosepo" and any(pair.epsilon is None for pair in pairs):
            error_message = "RosePO needs a flip-rate on every pair; build preferences with an oracle checkpoint."
            raise ValueError(error_message)

        policy = sft.model.clone()
        reference = sft.model.clone()
        reference_checksum = reference.checksum()
        objective = config.objective
        steps, metrics = self._optimize(
            "PO", policy, pairs, lambda batch: po_loss_and_grad(policy, reference, batch, objective), config
        )
        if reference.checksum() != reference_checksum:
            error_message = "The reference model changed during preference optimization."
            raise RuntimeError(error_message)
        return TrainingResult(Checkpoint.of(policy, "po", config.seed, steps), metrics)

    def sweep(
        self,
        base: RunConfig,
        grid: Mapping[str, Sequence[object]],
        metric: str,
        examples: Sequence[SequenceExample],
        catalogue: Sequence[str],
        *,
        pairs: Sequence[PreferencePair] = (),
        sft: Checkpoint | None = None,
        seeds: int = 1,
    ) -> SweepResult:
        """Train every grid cell, optionally over several seeds, and select by a validation metric.

        Args:
            base: Configuration the grid overrides.
            grid: Flat configuration key to candidate values.
            metric: `hr@K` or `ndcg@K` on the validation split.
            examples: Prepared examples.
            catalogue: Sorted catalogue.
            pairs: Preference pairs, for PO sweeps.
            sft: SFT checkpoint, for PO sweeps.
            seeds: Seeds per cell: base.seed, base.seed + 1, ...

        Raises:
            ValueError: If the validation split is empty or a PO sweep lacks pairs or a checkpoint.

        Returns:
            Best configuration (first cell on ties) and the report frame.
        """
        name, cutoff = parse_metric(metric)
        valid = [example for example in examples if example.split == "valid"]
        if not valid:
            error_message = "A sweep needs a nonempty validation split."
            raise ValueError(error_message)
        if base.stage == "po" and sft is None:
            error_message = "A preference-optimization sweep needs an SFT checkpoint."
            raise ValueError(error_message)

        keys = list(grid)
        rows: list[dict[str, object]] = []
        best = (float("-inf"), base)
        for cell in product(*grid.values()):
            overrides = dict(zip(keys, cell, strict=True))
            cell_config = base.with_overrides(overrides)
            values: list[float] = []
            for offset in range(seeds):
                config = cell_config.with_overrides({"seed": base.seed + offset})
                if config.stage == "po" and sft is not None:
                    checkpoint = self.train_po(config, pairs, sft).checkpoint
                else:
                    checkpoint = self.train_sft(config, examples, catalogue).checkpoint
                table = hr_ndcg(rank_examples(checkpoint.model, valid), [cutoff])
                values.append(metric_value(table, name, cutoff))
            mean = float(np.mean(values))
            std = float(np.std(values))
            self._console.info_print("SWEEP", f"{overrides or 'base'}: {metric} {mean:.4f} ± {std:.4f}.")
            seed_columns = {f"seed_{base.seed + offset}": value for offset, value in enumerate(values)}
            rows.append({**overrides, "metric": metric, "metric_mean": mean, "metric_std": std, **seed_columns})
            if mean > best[0]:
                best = (mean, cell_config)
        return SweepResult(best[1], pd.DataFrame(rows))

    # Helper methods.
    def _optimize[T](
        self,
        label: str,
        model: PolicyModel,
        items: Sequence[T],
        loss_and_grad: Callable[[Sequence[T]], tuple[float, Gradients]],
        config: RunConfig,
    ) -> tuple[int, pd.DataFrame]:
        """Run the configured epochs of Adam over shuffled, accumulated batches.

        Args:
            label: Console label.
            model: Model updated in place.
            items: Training items.
            loss_and_grad: Mean loss and gradient of a batch.
            config: Run configuration.

        Raises:
            FloatingPointError: If a loss is not finite.

        Returns:
            Optimizer steps taken and the step metrics.
        """
        subset = data_subset(len(items), config.data_fraction, config.seed)
        selected = [items[int(index)] for index in subset]
        batches_per_epoch = ceil(len(selected) / config.batch_size)
        steps_per_epoch = ceil(batches_per_epoch / config.accumulation_steps)
        total_steps = config.epochs * steps_per_epoch
        state = AdamState()
        rows: list[tuple[int, float, float]] = []

        with self._console.progress() as progress:
            task = progress.add_task(label, total=total_steps, loss=0.0)
            for epoch in range(config.epochs):
                order = np.random.default_rng(derive_seed(config.seed, SHUFFLE_SALT, epoch)).permutation(len(selected))
                size = config.batch_size
                batches = [order[start : start + size] for start in range(0, len(selected), size)]
                for group_start in range(0, len(batches), config.accumulation_steps):
                    group = batches[group_start : group_start + config.accumulation_steps]
                    step = state.step
                    lr = warmup_lr(config.lr, step, total_steps, config.warmup_fraction)
                    parts: list[tuple[int, float, Gradients]] = []
                    for batch in group:
                        batch_loss, grads = loss_and_grad([selected[int(index)] for index in batch])
                        if not np.isfinite(batch_loss):
                            error_message = f"{label} loss diverged at optimizer step {step}."
                            raise FloatingPointError(error_message)
                        parts.append((len(batch), batch_loss, grads))
                    loss, averaged = accumulate_gradients(parts)
                    state = adam_step(model, averaged, state, lr, config.weight_decay)
                    rows.append((step, loss, lr))
                    progress.update(task, advance=1, loss=rows[-1][1])

        if rows:
            self._console.info_print(
                label, f"{state.step} steps over {len(selected)} items, loss {rows[0][1]:.4f} → {rows[-1][1]:.4f}."
            )
        else:
            self._console.info_print(label, "No training items; the model is unchanged.")
        return state.step, pd.DataFrame(rows, columns=["step", "loss", "lr"])
