from typing import final, override

import numpy as np

from rosepo_lab.models.data import SequenceExample, Strategy
from rosepo_lab.utils.base_sampler import BaseSampler, SamplingContext


def draw_uniform(example: SequenceExample, context: SamplingContext, rng_seed: int) -> str:
    """Uniform draw over the catalogue minus the user's record and the target.

    Raises:
        ValueError: If the user has interacted with every catalogue item.
    """
    excluded = context.excluded(example)
    eligible = [item_id for item_id in context.catalogue if item_id not in excluded]
    if not eligible:
        error_message = f"Example {example.example_id}: every catalogue item is in the user's record."
        raise ValueError(error_message)
    return eligible[int(np.random.default_rng(rng_seed).integers(len(eligible)))]


@final
class UniformSampler(BaseSampler):
    @staticmethod
    @override
    def get_display_name() -> str:
        return "Uniform"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "uniform"

    @override
    def check(self, context: SamplingContext) -> None:
        pass

    @override
    def sample(self, example: SequenceExample, context: SamplingContext, rng_seed: int) -> tuple[str, Strategy]:
        return draw_uniform(example, context, rng_seed), "uniform"
