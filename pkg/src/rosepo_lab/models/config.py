"""Configuration models for training, preference objectives, and synthetic data."""

from collections.abc import Mapping
from typing import Literal, Self

from pydantic import ConfigDict, Field, model_validator

from rosepo_lab.models.data import LabModel, Stage

ObjectiveKind = Literal["dpo", "ipo", "cdpo", "rdpo", "rpo", "cpo", "simpo", "sdpo", "rosepo"]


class ObjectiveConfig(LabModel):
    """Selects a preference-alignment loss and carries its hyperparameters.

    Only the fields relevant to `kind` are consulted.
    """

    kind: ObjectiveKind = "rosepo"
    beta: float = Field(default=1.0, gt=0)
    epsilon: float = Field(default=0.2, gt=0, lt=0.5)
    tau: float = Field(default=0.1, gt=0)
    alpha: float = Field(default=0.2, ge=0)
    lambda_: float = Field(default=1.0, ge=0, alias="lambda")
    gamma: float = Field(default=1.0, ge=0)
    n_negatives: int = Field(default=3, ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


class RunConfig(LabModel):
    """One training run."""

    seed: int = 0
    stage: Stage = "sft"
    objective: ObjectiveConfig = ObjectiveConfig()
    batch_size: int = Field(default=256, gt=0)
    lr: float = Field(default=1e-3, gt=0)
    warmup_fraction: float = Field(default=0.1, ge=0, le=1)
    epochs: int = Field(default=1, gt=0)
    data_fraction: float = Field(default=1.0, gt=0, le=1)
    accumulation_steps: int = Field(default=1, gt=0)
    weight_decay: float = Field(default=0.0, ge=0)
    width: int = Field(default=64, gt=0)
    strategy: str | None = None

    def to_pairs(self) -> dict[str, object]:
        """Flatten into the key-value form of a `config.txt` file.

        Returns:
            Run fields followed by objective fields, the CPO weight under the key `lambda`.
        """
        run = self.model_dump(exclude={"objective"})
        return {**run, **self.objective.model_dump(by_alias=True)}

    @classmethod
    def from_pairs(cls, pairs: Mapping[str, object]) -> "RunConfig":
        """Build a run configuration from flat key-value pairs.

        String values are coerced by the field types, so parsed configuration text can be passed directly.

        Args:
            pairs: Run and objective fields, flat.

        Raises:
            ValueError: If a key is unknown or a value is invalid.

        Returns:
            Validated run configuration.
        """
        run_keys = set(cls.model_fields) - {"objective"}
        objective_keys = {field.alias or name for name, field in ObjectiveConfig.model_fields.items()}
        unknown = sorted(set(pairs) - run_keys - objective_keys)
        if unknown:
            error_message = f"Unknown configuration key(s): {', '.join(unknown)}."
            raise ValueError(error_message)
        objective = {key: value for key, value in pairs.items() if key in objective_keys}
        run = {key: value for key, value in pairs.items() if key in run_keys}
        return cls.model_validate({**run, "objective": objective})

    def with_overrides(self, overrides: Mapping[str, object]) -> "RunConfig":
        """Copy with some flat keys replaced and everything revalidated."""
        return RunConfig.from_pairs({**self.to_pairs(), **overrides})


class SyntheticSpec(LabModel):
    """Planted-structure dataset description."""

    n_users: int = Field(default=5000, gt=0)
    n_items: int = Field(default=500, ge=30)
    sequence_length: int = Field(default=20, ge=11)
    rho: float = Field(default=0.8, ge=0, le=1)
    zipf: float = Field(default=0.0, ge=0)
    clusters: int = Field(default=10, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_room(self) -> Self:
        if self.sequence_length + 19 > self.n_items:
            error_message = (
                f"Catalogue of {self.n_items} items cannot supply 19 unseen candidates"
                f" to users with {self.sequence_length} interactions."
            )
            raise ValueError(error_message)
        if self.clusters > self.n_items:
            error_message = f"Cannot form {self.clusters} clusters from {self.n_items} items."
            raise ValueError(error_message)
        return self


class OracleConfig(LabModel):
    """Preference oracle training options."""

    seed: int = 0
    epochs: int = Field(default=10, gt=0)
    batch_size: int = Field(default=256, gt=0)
    lr: float = Field(default=1e-3, gt=0)
    weight_decay: float = Field(default=0.0, ge=0)
    width: int = Field(default=64, gt=0)
