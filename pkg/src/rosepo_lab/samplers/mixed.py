"""Hybrid sampling: each pair delegates to a uniformly chosen self-hard, semantic, or popularity-aware draw."""

from typing import final, override

import numpy as np

from rosepo_lab.models.data import SequenceExample, Strategy
from rosepo_lab.samplers.popular import PopularSampler
from rosepo_lab.samplers.self_hard import SelfHardSampler
from rosepo_lab.samplers.semantic import SemanticSampler
from rosepo_lab.utils.base_sampler import BaseSampler, SamplingContext
from rosepo_lab.utils.converters import derive_seed

# Keeps the strategy choice off the delegate's seed stream.
CHOICE_SALT = 0x6D6978


@final
class MixedSampler(BaseSampler):
    def __init__(self) -> None:
        """Instantiate the delegates."""
        self._delegates: tuple[BaseSampler, ...] = (SelfHardSampler(), SemanticSampler(), PopularSampler())

    @staticmethod
    @override
    def get_display_name() -> str:
        return "Mixed"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "mixed"

    @override
    def check(self, context: SamplingContext) -> None:
        for delegate in self._delegates:
            delegate.check(context)

    @override
    def sample(self, example: SequenceExample, context: SamplingContext, rng_seed: int) -> tuple[str, Strategy]:
        choice = int(np.random.default_rng(derive_seed(rng_seed, CHOICE_SALT)).integers(len(self._delegates)))
        return self._delegates[choice].sample(example, context, rng_seed)
