"""Preference dataset construction.

Pairs one sampled rejected item with each training example's target, keeps both inside the 20-item candidate list,
optionally draws extra negatives for the multi-negative objective, and attaches the oracle's flip-rate.

Usage:
    ```python
    context = SamplingContext(catalogue, records, sft_model=sft.model, store=store, pop=pop)
    pairs = build_preferences(examples, "self-hard", context, seed=0, n_negatives=3)
    pairs = attach_epsilons(pairs, oracle.model)
    save_preferences(pairs, path)
    ```
"""

from collections.abc import Iterable, Sequence
from functools import cache
from pathlib import Path

import numpy as np

from rosepo_lab.back_end.dataset import PopularityTable
from rosepo_lab.back_end.embeddings import EmbeddingStore
from rosepo_lab.back_end.oracle import clamp_epsilon, pair_flip_rates
from rosepo_lab.back_end.policy import PolicyModel
from rosepo_lab.models.data import PreferencePair, SequenceExample, Strategy
from rosepo_lab.utils.base_sampler import BaseSampler, SamplingContext
from rosepo_lab.utils.converters import derive_seed
from rosepo_lab.utils.startup import get_samplers

AMEND_SALT = 0x616D64
NEGATIVES_SALT = 0x6E6567
EPSILON_PLACES = 6


@cache
def _sampler_instances() -> dict[str, BaseSampler]:
    return {sampler_type.get_cli_name(): sampler_type() for sampler_type in get_samplers()}


def get_sampler(strategy: str) -> BaseSampler:
    """Match a strategy name to its sampler plug-in.

    Args:
        strategy: CLI name of the strategy.

    Raises:
        ValueError: If no sampler has that name.

    Returns:
        Sampler instance.
    """
    samplers = _sampler_instances()
    if strategy not in samplers:
        error_message = f'Strategy "{strategy}" is not one of {", ".join(sorted(samplers))}.'
        raise ValueError(error_message)
    return samplers[strategy]


def amend_candidates(example: SequenceExample, rejected: str, rng_seed: int) -> SequenceExample:
    """Make sure the rejected item is a candidate, replacing a random non-target distractor if it is not.

    Args:
        example: Example with candidates.
        rejected: Rejected item.
        rng_seed: Seed for the pair.

    Returns:
        The example itself, or a copy whose candidate list holds the rejected item at the replaced position.
    """
    if rejected in example.candidates:
        return example
    distractors = [position for position, item_id in enumerate(example.candidates) if item_id != example.target]
    if not distractors:
        error_message = f"Example {example.example_id}: no distractor to replace with {rejected}."
        raise ValueError(error_message)
    rng = np.random.default_rng(derive_seed(rng_seed, AMEND_SALT))
    position = distractors[int(rng.integers(len(distractors)))]
    candidates = list(example.candidates)
    candidates[position] = rejected
    return example.model_copy(update={"candidates": tuple(candidates)})


def make_pair(example: SequenceExample, rejected: str, strategy: Strategy, rng_seed: int) -> PreferencePair:
    """Pair an example's target with a rejected item, amending the candidates if needed.

    Args:
        example: Example with candidates.
        rejected: Rejected item.
        strategy: Strategy tag to record.
        rng_seed: Seed for the pair.

    Returns:
        Validated preference pair without a flip-rate.
    """
    amended = amend_candidates(example, rejected, rng_seed)
    return PreferencePair(example=amended, chosen=example.target, rejected=rejected, strategy=strategy)


def sample(strategy: str, example: SequenceExample, context: SamplingContext, rng_seed: int) -> PreferencePair:
    """Draw one preference pair with a named strategy.

    Args:
        strategy: CLI name of the strategy.
        example: Example with candidates.
        context: Sampling context.
        rng_seed: Seed for the pair.

    Returns:
        Preference pair.
    """
    rejected, tag = get_sampler(strategy).sample(example, context, rng_seed)
    return make_pair(example, rejected, tag, rng_seed)


def sample_uniform(example: SequenceExample, context: SamplingContext, rng_seed: int) -> PreferencePair:
    """Rejected drawn uniformly from the catalogue minus the user's record."""
    return sample("uniform", example, context, rng_seed)


def sample_self_hard(
    example: SequenceExample, sft_model: PolicyModel, context: SamplingContext, rng_seed: int
) -> PreferencePair:
    """Rejected drawn among candidates the SFT model ranks above the target, uniform when it ranks the target first."""
    narrowed = SamplingContext(context.catalogue, context.records, sft_model=sft_model)
    return sample("self-hard", example, narrowed, rng_seed)


def sample_semantic(example: SequenceExample, store: EmbeddingStore, context: SamplingContext) -> PreferencePair:
    """Rejected is the non-interacted item most similar to the history."""
    return sample("semantic", example, SamplingContext(context.catalogue, context.records, store=store), 0)


def sample_popular(
    example: SequenceExample, pop: PopularityTable, context: SamplingContext, rng_seed: int
) -> PreferencePair:
    """Rejected drawn proportional to training popularity among non-interacted items."""
    return sample("popular", example, SamplingContext(context.catalogue, context.records, pop=pop), rng_seed)


def sample_mixed(example: SequenceExample, context: SamplingContext, rng_seed: int) -> PreferencePair:
    """Self-hard, semantic, or popularity-aware, chosen uniformly per pair."""
    return sample("mixed", example, context, rng_seed)


def draw_negatives(pair: PreferencePair, count: int, rng_seed: int) -> PreferencePair:
    """Add extra negatives drawn uniformly from the candidates other than the chosen and rejected items.

    Args:
        pair: Preference pair.
        count: Number of extra negatives.
        rng_seed: Seed for the pair; the draw uses its own derived stream.

    Raises:
        ValueError: If the candidate list is too short.

    Returns:
        Pair with `negatives` set.
    """
    if count <= 0:
        return pair
    pool = [item_id for item_id in pair.example.candidates if item_id not in {pair.chosen, pair.rejected}]
    if len(pool) < count:
        error_message = f"Example {pair.example.example_id}: only {len(pool)} candidates left for {count} negatives."
        raise ValueError(error_message)
    picked = np.random.default_rng(derive_seed(rng_seed, NEGATIVES_SALT)).choice(len(pool), size=count, replace=False)
    return pair.model_copy(update={"negatives": tuple(pool[int(row)] for row in picked)})


def build_preferences(
    examples: Sequence[SequenceExample], strategy: str, context: SamplingContext, seed: int, n_negatives: int = 1
) -> list[PreferencePair]:
    """One preference pair per training example.

    Args:
        examples: Prepared examples; only the train split is used.
        strategy: CLI name of the strategy.
        context: Sampling context.
        seed: Build seed; each example uses a seed derived from it and its ID.
        n_negatives: Negatives per pair for the multi-negative objective, counting the rejected item.

    Raises:
        ValueError: If the context lacks an input the strategy needs.

    Returns:
        Pairs in example order.
    """
    sampler = get_sampler(strategy)
    sampler.check(context)
    pairs: list[PreferencePair] = []
    for example in examples:
        if example.split != "train":
            continue
        rng_seed = derive_seed(seed, example.example_id)
        rejected, tag = sampler.sample(example, context, rng_seed)
        pairs.append(draw_negatives(make_pair(example, rejected, tag, rng_seed), n_negatives - 1, rng_seed))
    return pairs


def attach_epsilon(pair: PreferencePair, oracle: PolicyModel) -> PreferencePair:
    """Set a pair's flip-rate from the oracle, clamped and rounded to six places."""
    return attach_epsilons([pair], oracle)[0]


def attach_epsilons(pairs: Sequence[PreferencePair], oracle: PolicyModel) -> list[PreferencePair]:
    """Set every pair's flip-rate from the oracle in one batched pass.

    Args:
        pairs: Preference pairs.
        oracle: Oracle model.

    Returns:
        Pairs with `epsilon` set.
    """
    rates = clamp_epsilon(
        pair_flip_rates(
            oracle,
            [pair.example.history for pair in pairs],
            [pair.chosen for pair in pairs],
            [pair.rejected for pair in pairs],
        )
    )
    return [
        pair.model_copy(update={"epsilon": round(float(rate), EPSILON_PLACES)})
        for pair, rate in zip(pairs, rates, strict=True)
    ]


def save_preferences(pairs: Iterable[PreferencePair], path: Path) -> None:
    """Write pairs as newline-delimited JSON records."""
    path.parent.mkdir(parents=True, exist_ok=True)
    _ = path.write_text("".join(f"{pair.to_json_string()}\n" for pair in pairs), encoding="utf-8")


def load_preferences(path: Path) -> list[PreferencePair]:
    """Read pairs written by `save_preferences`, reporting the line of a malformed record."""
    pairs: list[PreferencePair] = []
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        try:
            pairs.append(PreferencePair.model_validate_json(line))
        except ValueError as e:
            error_message = f"{path}, line {line_number}: {e}"
            raise ValueError(error_message) from None
    return pairs
