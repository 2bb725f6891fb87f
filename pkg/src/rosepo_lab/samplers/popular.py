from typing import final, override

import numpy as np

from rosepo_lab.models.data import SequenceExample, Strategy
from rosepo_lab.utils.base_sampler import BaseSampler, SamplingContext


@final
class PopularSampler(BaseSampler):
    """Draw proportional to training interaction counts over non-interacted items."""

    @staticmethod
    @override
    def get_display_name() -> str:
        return "Popularity-aware"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "popular"

    @override
    def check(self, context: SamplingContext) -> None:
        _ = context.require_pop()

    @override
    def sample(self, example: SequenceExample, context: SamplingContext, rng_seed: int) -> tuple[str, Strategy]:
        pop = context.require_pop()
        excluded = context.excluded(example)
        eligible = [item_id for item_id in context.catalogue if item_id not in excluded]
        weights = np.array([pop.count(item_id) for item_id in eligible], dtype=np.float64)
        total = weights.sum()
        if total <= 0:
            error_message = (
                f"Example {example.example_id}: no non-interacted item has a training interaction;"
                " use --strategy uniform for this dataset."
            )
            raise ValueError(error_message)
        choice = np.random.default_rng(rng_seed).choice(len(eligible), p=weights / total)
        return eligible[int(choice)], "popular"
