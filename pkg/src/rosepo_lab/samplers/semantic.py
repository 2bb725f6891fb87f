from typing import final, override

from rosepo_lab.back_end.embeddings import most_similar_item
from rosepo_lab.models.data import SequenceExample, Strategy
from rosepo_lab.utils.base_sampler import BaseSampler, SamplingContext


@final
class SemanticSampler(BaseSampler):
    """Deterministic: the non-interacted item most similar to the history."""

    @staticmethod
    @override
    def get_display_name() -> str:
        return "Semantic-similar"

    @staticmethod
    @override
    def get_cli_name() -> str:
        return "semantic"

    @override
    def check(self, context: SamplingContext) -> None:
        _ = context.require_store()

    @override
    def sample(self, example: SequenceExample, context: SamplingContext, rng_seed: int) -> tuple[str, Strategy]:
        return most_similar_item(context.require_store(), example.history, context.excluded(example)), "semantic"
