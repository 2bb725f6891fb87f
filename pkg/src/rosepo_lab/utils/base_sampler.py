"""Rejected-response sampling strategies for preference-pair construction.

Definition of the methods a sampler class must implement to be used when building preference data.

Usage:
    Implement BaseSampler in a module under `rosepo_lab/samplers/`; its CLI name becomes a valid `--strategy` value.
"""

from abc import ABC, abstractmethod
from collections.abc import Mapping
from dataclasses import dataclass, field

from rosepo_lab.back_end.dataset import PopularityTable
from rosepo_lab.back_end.embeddings import EmbeddingStore
from rosepo_lab.back_end.policy import PolicyModel
from rosepo_lab.models.data import SequenceExample, Strategy


@dataclass(frozen=True)
class SamplingContext:
    """Everything a sampler may consult. Strategies declare which optional inputs they need.

    Attributes:
        catalogue: Every item ID, sorted.
        records: Every item each user interacted with.
        sft_model: SFT policy for self-hard sampling.
        store: Item embeddings for semantic sampling.
        pop: Training popularity for popularity-aware sampling.
    """

    catalogue: tuple[str, ...]
    records: Mapping[str, frozenset[str]] = field(default_factory=dict)
    sft_model: PolicyModel | None = None
    store: EmbeddingStore | None = None
    pop: PopularityTable | None = None

    def excluded(self, example: SequenceExample) -> frozenset[str]:
        """Items that may never be rejected: the user's record and the example's target."""
        return self.records.get(example.user_id, frozenset()) | {example.target}

    def require_sft_model(self) -> PolicyModel:
        """SFT model or a usage error."""
        if self.sft_model is None:
            error_message = "Self-hard sampling needs an SFT checkpoint (--sft-ckpt)."
            raise ValueError(error_message)
        return self.sft_model

    def require_store(self) -> EmbeddingStore:
        """Embedding store or a usage error."""
        if self.store is None:
            error_message = "Semantic sampling needs item embeddings."
            raise ValueError(error_message)
        return self.store

    def require_pop(self) -> PopularityTable:
        """Popularity table or a usage error."""
        if self.pop is None:
            error_message = "Popularity-aware sampling needs a popularity table."
            raise ValueError(error_message)
        return self.pop


class BaseSampler(ABC):
    """Base class to enforce the sampler interface.

    Samplers only pick the rejected item; candidate amendment and pair validation happen in
    [prefdata][rosepo_lab.back_end.prefdata].
    """

    @staticmethod
    @abstractmethod
    def get_display_name() -> str:
        """Get the display name of the strategy.

        Returns:
            Name used in reports.
        """

    @staticmethod
    @abstractmethod
    def get_cli_name() -> str:
        """Get the name of the strategy for CLI usage.

        This is the value used with the `--strategy` flag of `build-prefs`.

        Returns:
            Name of the strategy on the CLI.
        """

    @abstractmethod
    def check(self, context: SamplingContext) -> None:
        """Fail early when the context lacks an input this strategy needs.

        Args:
            context: Sampling context.

        Raises:
            ValueError: If a required input is missing.
        """

    @abstractmethod
    def sample(self, example: SequenceExample, context: SamplingContext, rng_seed: int) -> tuple[str, Strategy]:
        """Pick the rejected item for one example.

        Args:
            example: Example with candidates.
            context: Sampling context.
            rng_seed: Seed for this example.

        Returns:
            Rejected item and the strategy tag actually used.
        """
