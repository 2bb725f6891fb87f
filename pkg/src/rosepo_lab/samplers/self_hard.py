"""Self-hard rejected sampling.

Where the SFT model ranks some candidate above the target, one of those over-ranked candidates is drawn uniformly.
Where the SFT model already ranks the target first, the draw falls back to uniform sampling with the same seed.
"""

from typing import final, override

import numpy as np
from numpy.typing import NDArray

from rosepo_lab.back_end.policy import forward_scores
from rosepo_lab.models.data import SequenceExample, Strategy
from rosepo_lab.samplers.uniform import draw_uniform
from rosepo_lab.utils.base_sampler import BaseSampler, SamplingContext


def over_ranked(scores: NDArray[np.float64], candidates: tuple[str, ...], target: str) -> list[str]:
    """Candidates scoring strictly above the target, in candidate order."""
    target_score = scores[candidates.index(target)]
    return [item_id for item_id, score in zip(candidates, scores, strict=True) if score > target_score]


@final
class SelfHardSampler(BaseSampler):
    @staticmethod
    @override
    def get_display_name() -> str:
        return "Self-hard"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "self-hard"

    @override
    def check(self, context: SamplingContext) -> None:
        _ = context.require_sft_model()

    @override
    def sample(self, example: SequenceExample, context: SamplingContext, rng_seed: int) -> tuple[str, Strategy]:
        scores = forward_scores(context.require_sft_model(), example.history, example.candidates)
        harder = over_ranked(scores, example.candidates, example.target)
        if not harder:
            return draw_uniform(example, context, rng_seed), "self_hard"
        return harder[int(np.random.default_rng(rng_seed).integers(len(harder)))], "self_hard"
