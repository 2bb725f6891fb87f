"""Validated options for each command-line verb.

The CLI parses flags into one of these models; the pipeline handler dispatches on `command`.
"""

from pathlib import Path
from typing import Literal

from pydantic import Field

from rosepo_lab.models.data import LabModel

CandidateMode = Literal["given", "semantic_hard", "all_items"]


class CommandOptions(LabModel):
    """Options shared by every verb."""

    debug: bool = False
    quiet: bool = False


class PrepareOptions(CommandOptions):
    command: Literal["prepare"] = "prepare"
    interactions: Path
    items: Path
    embeddings: Path | None = None
    min_rating: int = 0
    min_user_interactions: int = Field(default=11, ge=11)
    seed: int = 0
    out: Path


class GenerateOptions(CommandOptions):
    command: Literal["generate"] = "generate"
    n_users: int = 5000
    n_items: int = 500
    sequence_length: int = 20
    rho: float = 0.8
    zipf: float = 0.0
    clusters: int = 10
    seed: int = 0
    out: Path


class TrainOracleOptions(CommandOptions):
    command: Literal["train-oracle"] = "train-oracle"
    data: Path
    epochs: int = 10
    batch_size: int = 256
    lr: float = 1e-3
    weight_decay: float = 0.0
    width: int = 64
    seed: int = 0
    out: Path


class RunOptions(CommandOptions):
    """Options of verbs that train under a run configuration.

    Attributes:
        config: Optional `key = value` configuration file.
        overrides: Flat configuration keys given as flags; they win over the file.
    """

    run_dir: Path
    config: Path | None = None
    overrides: dict[str, str] = Field(default_factory=dict)


class TrainSftOptions(RunOptions):
    command: Literal["train-sft"] = "train-sft"
    data: Path


class TrainPoOptions(RunOptions):
    command: Literal["train-po"] = "train-po"
    prefs: Path
    sft_ckpt: Path


class BuildPrefsOptions(CommandOptions):
    command: Literal["build-prefs"] = "build-prefs"
    data: Path
    strategy: str
    sft_ckpt: Path | None = None
    oracle_ckpt: Path | None = None
    n_negatives: int = Field(default=3, ge=1)
    seed: int = 0
    out: Path


class InjectFlipsOptions(CommandOptions):
    command: Literal["inject-flips"] = "inject-flips"
    prefs: Path
    flip_prob: float = Field(ge=0, lt=0.5)
    perfect_epsilon: bool = False
    seed: int = 0
    out: Path


class EvaluateOptions(CommandOptions):
    command: Literal["evaluate"] = "evaluate"
    data: Path
    ckpt: Path
    run_dir: Path
    modes: list[CandidateMode] = Field(default_factory=lambda: ["given"])
    ks: list[int] = Field(default_factory=lambda: [1, 5, 10, 20])


class SweepOptions(RunOptions):
    command: Literal["sweep"] = "sweep"
    data: Path
    grid: dict[str, list[str]] = Field(default_factory=dict)
    metric: str = "hr@1"
    seeds: int = Field(default=1, ge=1)
    prefs: Path | None = None
    sft_ckpt: Path | None = None


class ReportOptions(CommandOptions):
    command: Literal["report"] = "report"
    run_dirs: list[Path] = Field(min_length=1)
    out: Path


type Options = (
    PrepareOptions
    | GenerateOptions
    | TrainOracleOptions
    | TrainSftOptions
    | BuildPrefsOptions
    | InjectFlipsOptions
    | TrainPoOptions
    | EvaluateOptions
    | SweepOptions
    | ReportOptions
)
