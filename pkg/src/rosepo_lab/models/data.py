"""Data records flowing through the pipeline.

Every record is an immutable pydantic model so it can be shared freely and persisted as one JSON line.
"""

from typing import Literal, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

from rosepo_lab.utils.constants import HISTORY_LENGTH

Split = Literal["train", "valid", "test"]
Strategy = Literal["uniform", "self_hard", "semantic", "popular"]
Stage = Literal["sft", "po", "oracle"]


class LabModel(BaseModel):
    """Base model for every record: frozen and strict about unknown fields."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    def to_json_string(self) -> str:
        """Serialize to a compact JSON string.

        Returns:
            JSON text without a trailing newline.
        """
        return self.model_dump_json()


class Interaction(LabModel):
    """One timestamped user-item event."""

    user_id: str
    item_id: str
    rating: int
    timestamp: int = Field(ge=0)


class SequenceExample(LabModel):
    """Fixed-window history, the next item, and the candidate set to rank it in."""

    example_id: int = Field(ge=0)
    user_id: str
    history: tuple[str, ...]
    target: str
    candidates: tuple[str, ...] = ()
    split: Split
    label_timestamp: int = Field(ge=0)

    @model_validator(mode="after")
    def _check_window(self) -> Self:
        if len(self.history) != HISTORY_LENGTH:
            count = len(self.history)
            error_message = f"Example {self.example_id}: history has {count} items, expected {HISTORY_LENGTH}."
            raise ValueError(error_message)
        if self.target in self.history:
            error_message = f"Example {self.example_id}: target {self.target} appears in its own history."
            raise ValueError(error_message)
        if self.candidates:
            if self.target not in self.candidates:
                error_message = f"Example {self.example_id}: target {self.target} is not a candidate."
                raise ValueError(error_message)
            if len(set(self.candidates)) != len(self.candidates):
                error_message = f"Example {self.example_id}: duplicate candidates."
                raise ValueError(error_message)
        return self


class PreferencePair(LabModel):
    """A sequence example with a chosen and a rejected response and its flip-rate."""

    example: SequenceExample
    chosen: str
    rejected: str
    epsilon: float | None = Field(default=None, gt=0, lt=1)
    strategy: Strategy
    negatives: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check_pair(self) -> Self:
        if self.chosen == self.rejected:
            error_message = f"Example {self.example.example_id}: chosen and rejected are both {self.chosen}."
            raise ValueError(error_message)
        for item in (self.chosen, self.rejected, *self.negatives):
            if item not in self.example.candidates:
                error_message = f"Example {self.example.example_id}: {item} is not among the candidates."
                raise ValueError(error_message)
        if {self.chosen, self.rejected} & set(self.negatives):
            error_message = f"Example {self.example.example_id}: extra negatives repeat the chosen or rejected item."
            raise ValueError(error_message)
        return self


class UserRecord(LabModel):
    """Every item a user interacted with, across all splits."""

    user_id: str
    items: tuple[str, ...]


class CheckpointMeta(LabModel):
    """Training metadata stored in a checkpoint's trailing JSON block."""

    version: str
    stage: Stage
    seed: int
    steps: int = Field(ge=0)
    width: int = Field(gt=0)
    item_ids: tuple[str, ...]
