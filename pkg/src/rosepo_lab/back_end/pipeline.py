"""Pipeline handler.

Responsible for carrying out each command-line verb: loading inputs, calling the domain modules, writing outputs and
the reproducibility manifest. Every verb runs inside an exception guard so failures print through the console and map
to a nonzero exit status.

Usage:
    Instantiate Pipeline with a console and call `run()` with the parsed options.

    ```python
    exit_code = Pipeline(console).run(options)
    ```
"""

from collections.abc import Mapping
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path
from typing import final

import numpy as np
import pandas as pd

from rosepo_lab.__about__ import __version__
from rosepo_lab.back_end.dataset import (
    PopularityTable,
    attach_candidates,
    dataset_statistics,
    ingest,
    load_catalogue,
    load_examples,
    load_popularity,
    load_records,
    popularity,
    save_examples,
    save_items,
    save_popularity,
    save_records,
    window_and_split,
)
from rosepo_lab.back_end.embeddings import EmbeddingStore, cooccurrence_embeddings, load_embeddings, save_embeddings
from rosepo_lab.back_end.evaluation import evaluate_run, write_evaluation
from rosepo_lab.back_end.oracle import train_oracle
from rosepo_lab.back_end.policy import Checkpoint, load_checkpoint, save_checkpoint
from rosepo_lab.back_end.prefdata import attach_epsilons, build_preferences, load_preferences, save_preferences
from rosepo_lab.back_end.report import merge_runs, write_report
from rosepo_lab.back_end.synthetic import generate, inject_flips, save_flip_mask, write_synthetic
from rosepo_lab.back_end.trainer import PO_LEARNING_RATE, Trainer, write_metrics
from rosepo_lab.models.config import OracleConfig, RunConfig, SyntheticSpec
from rosepo_lab.models.data import SequenceExample, Stage
from rosepo_lab.models.options import (
    BuildPrefsOptions,
    EvaluateOptions,
    GenerateOptions,
    InjectFlipsOptions,
    Options,
    PrepareOptions,
    ReportOptions,
    RunOptions,
    SweepOptions,
    TrainOracleOptions,
    TrainPoOptions,
    TrainSftOptions,
)
from rosepo_lab.utils.base_sampler import SamplingContext
from rosepo_lab.utils.console import Console
from rosepo_lab.utils.constants import (
    BETA_GRID,
    CHECKPOINTS_DIRECTORY,
    CONFIG_FILE,
    EMBEDDINGS_FILE,
    EXAMPLES_FILE,
    ITEMS_FILE,
    MANIFEST_FILE,
    METRICS_FILE,
    POPULARITY_FILE,
    RECORDS_FILE,
    REPORT_FILE,
    STATISTICS_FILE,
)
from rosepo_lab.utils.converters import format_fixed, format_key_value, parse_key_value


@dataclass(frozen=True)
class PreparedData:
    """Contents of a prepared data directory."""

    examples: list[SequenceExample]
    records: dict[str, frozenset[str]]
    catalogue: tuple[str, ...]
    pop: PopularityTable
    store: EmbeddingStore


def load_prepared(directory: Path) -> PreparedData:
    """Read a directory written by `prepare`.

    Args:
        directory: Prepared data directory.

    Returns:
        Prepared data.
    """
    catalogue = load_catalogue(directory / ITEMS_FILE)
    return PreparedData(
        examples=load_examples(directory / EXAMPLES_FILE),
        records=load_records(directory / RECORDS_FILE),
        catalogue=catalogue,
        pop=load_popularity(directory / POPULARITY_FILE),
        store=load_embeddings(directory / EMBEDDINGS_FILE, catalogue),
    )


def digest(path: Path) -> str:
    """SHA-256 of a file, or of a directory's files (name and content, sorted, manifest excluded)."""
    hasher = sha256()
    if path.is_dir():
        for child in sorted(path.iterdir()):
            if child.is_file() and child.name != MANIFEST_FILE:
                hasher.update(child.name.encode("utf-8"))
                hasher.update(child.read_bytes())
    else:
        hasher.update(path.read_bytes())
    return hasher.hexdigest()


def write_manifest(
    out_dir: Path,
    verb: str,
    seed: int | None,
    inputs: Mapping[str, Path | None],
    extra: Mapping[str, object] | None = None,
) -> None:
    """Record a verb's version, seed, and input hashes in `<out_dir>/manifest.txt`.

    Each verb owns the keys prefixed with its name, so verbs sharing a directory keep their own entries and a rerun
    rewrites identical content.

    Args:
        out_dir: Output directory.
        verb: Command name.
        seed: Seed of the invocation, if any.
        inputs: Input name to path; None entries are skipped.
        extra: Further `<verb>.<key>` entries.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_FILE
    existing = parse_key_value(path.read_text(encoding="utf-8")) if path.is_file() else {}
    entries: dict[str, object] = {key: value for key, value in existing.items() if not key.startswith(f"{verb}.")}
    entries[f"{verb}.version"] = __version__
    entries[f"{verb}.seed"] = seed
    for name, input_path in inputs.items():
        if input_path is not None:
            entries[f"{verb}.input.{name}"] = f"sha256:{digest(input_path)}"
    for key, value in (extra or {}).items():
        entries[f"{verb}.{key}"] = value
    _ = path.write_text(format_key_value(dict(sorted(entries.items()))), encoding="utf-8")


def resolve_run_config(options: RunOptions, stage: Stage) -> RunConfig:
    """Merge the configuration file and flag overrides (flags win) for a stage.

    Preference optimization defaults to a learning rate of 1e-4 unless one is given.

    Args:
        options: Run options.
        stage: Training stage.

    Returns:
        Effective run configuration.
    """
    pairs: dict[str, object] = {}
    if options.config is not None:
        pairs.update(parse_key_value(options.config.read_text(encoding="utf-8")))
    pairs.update(options.overrides)
    if stage == "po" and "lr" not in pairs:
        pairs["lr"] = PO_LEARNING_RATE
    pairs["stage"] = stage
    return RunConfig.from_pairs(pairs)


def sweep_grid(options: SweepOptions, stage: Stage) -> dict[str, list[str]]:
    """Grid to search, searching beta over `BETA_GRID` for preference sweeps that do not fix it.

    Args:
        options: Sweep options.
        stage: Training stage of the sweep.

    Returns:
        Configuration key to candidate values.
    """
    fixed = set(options.overrides)
    if options.config is not None:
        fixed |= set(parse_key_value(options.config.read_text(encoding="utf-8")))
    if stage != "po" or "beta" in options.grid or "beta" in fixed:
        return dict(options.grid)
    return {"beta": [str(beta) for beta in BETA_GRID], **options.grid}


def load_stage_checkpoint(path: Path, stage: Stage, catalogue: tuple[str, ...] | None = None) -> Checkpoint:
    """Load a checkpoint and check its stage and catalogue.

    Raises:
        ValueError: If the stage or catalogue does not match.
    """
    checkpoint = load_checkpoint(path)
    if checkpoint.meta.stage != stage:
        error_message = f"{path} is a {checkpoint.meta.stage} checkpoint, expected {stage}."
        raise ValueError(error_message)
    if catalogue is not None and checkpoint.model.item_ids != catalogue:
        error_message = f"{path} was trained on a different catalogue."
        raise ValueError(error_message)
    return checkpoint


@final
class Pipeline:
    """Handler for command-line verbs."""

    def __init__(self, console: Console) -> None:
        """Initialize pipeline handler.

        Args:
            console: Console instance.
        """
        self._console = console
        self._trainer = Trainer(console)

    def run(self, options: Options) -> int:
        """Run one verb.

        Args:
            options: Parsed options of the verb.

        Returns:
            0 if the verb completed, 1 otherwise.
        """
        try:
            match options:
                case PrepareOptions():
                    self.prepare(options)
                case GenerateOptions():
                    self.generate(options)
                case TrainOracleOptions():
                    self.train_oracle(options)
                case TrainSftOptions():
                    self.train_sft(options)
                case BuildPrefsOptions():
                    self.build_prefs(options)
                case InjectFlipsOptions():
                    self.inject_flips(options)
                case TrainPoOptions():
                    self.train_po(options)
                case EvaluateOptions():
                    self.evaluate(options)
                case SweepOptions():
                    self.sweep(options)
                case ReportOptions():
                    self.report(options)
        except FloatingPointError as e:
            self._console.critical_print(options.command.upper(), f"Training diverged: {e}")
            return 1
        except Exception as e:  # noqa: BLE001
            self._console.exception_error_print(options.command.upper(), e)
            return 1
        else:
            return 0

    # Data verbs.

    def prepare(self, options: PrepareOptions) -> None:
        """Ingest, window, split, draw candidates, and write a prepared data directory."""
        dataset = ingest(options.interactions, options.items, options.min_rating)
        examples = window_and_split(dataset, options.min_user_interactions)
        examples = attach_candidates(dataset, examples, options.seed)
        pop = popularity(dataset, examples)
        if options.embeddings is None:
            self._console.info_print("PREPARE", "No embeddings given; building the co-occurrence SVD fallback.")
            store = cooccurrence_embeddings(examples, dataset.catalogue)
        else:
            store = load_embeddings(options.embeddings, dataset.catalogue)

        out = options.out
        out.mkdir(parents=True, exist_ok=True)
        save_examples(examples, out / EXAMPLES_FILE)
        save_records(dataset.records(), out / RECORDS_FILE)
        save_items(dataset, out / ITEMS_FILE)
        save_popularity(pop, out / POPULARITY_FILE)
        save_embeddings(store, out / EMBEDDINGS_FILE)
        statistics = dataset_statistics(dataset, examples)
        statistics.to_csv(out / STATISTICS_FILE, index=False, lineterminator="\n")
        write_manifest(
            out,
            "prepare",
            options.seed,
            {"interactions": options.interactions, "items": options.items, "embeddings": options.embeddings},
            {"embeddings_source": "file" if options.embeddings else "cooccurrence-svd"},
        )

        self._console.table_print(
            "Dataset statistics",
            ["statistic", "value"],
            [[str(name), str(value)] for name, value in zip(statistics["statistic"], statistics["value"], strict=True)],
        )

    def generate(self, options: GenerateOptions) -> None:
        """Write a synthetic dataset."""
        spec = SyntheticSpec(
            n_users=options.n_users,
            n_items=options.n_items,
            sequence_length=options.sequence_length,
            rho=options.rho,
            zipf=options.zipf,
            clusters=options.clusters,
            seed=options.seed,
        )
        data = generate(spec)
        write_synthetic(data, options.out)
        write_manifest(options.out, "generate", options.seed, {})
        self._console.info_print(
            "GENERATE", f"Wrote {len(data.interactions)} interactions over {options.n_items} items to {options.out}."
        )

    def build_prefs(self, options: BuildPrefsOptions) -> None:
        """Build a preference file, attaching flip-rates when an oracle is given."""
        prepared = load_prepared(options.data)
        sft = None if options.sft_ckpt is None else load_stage_checkpoint(options.sft_ckpt, "sft", prepared.catalogue)
        context = SamplingContext(
            catalogue=prepared.catalogue,
            records=prepared.records,
            sft_model=None if sft is None else sft.model,
            store=prepared.store,
            pop=prepared.pop,
        )
        pairs = build_preferences(prepared.examples, options.strategy, context, options.seed, options.n_negatives)
        if options.oracle_ckpt is not None:
            oracle = load_stage_checkpoint(options.oracle_ckpt, "oracle", prepared.catalogue)
            pairs = attach_epsilons(pairs, oracle.model)
            epsilons = np.array([pair.epsilon for pair in pairs], dtype=np.float64)
            if len(epsilons):
                span = f"[{format_fixed(epsilons.min())}, {format_fixed(epsilons.max())}]"
                self._console.info_print("BUILD-PREFS", f"Flip-rates span {span}, mean {epsilons.mean():.4f}.")
        else:
            self._console.info_print("BUILD-PREFS", "No oracle checkpoint; pairs carry no flip-rate.")
        save_preferences(pairs, options.out)
        write_manifest(
            options.out.parent,
            f"build-prefs:{options.out.stem}",
            options.seed,
            {"data": options.data, "sft_ckpt": options.sft_ckpt, "oracle_ckpt": options.oracle_ckpt},
            {"output": options.out.name, "strategy": options.strategy, "n_negatives": options.n_negatives},
        )
        tags = sorted({pair.strategy for pair in pairs})
        self._console.info_print("BUILD-PREFS", f"Wrote {len(pairs)} pairs ({', '.join(tags)}) to {options.out}.")

    def inject_flips(self, options: InjectFlipsOptions) -> None:
        """Corrupt a preference file with random label flips."""
        pairs = load_preferences(options.prefs)
        flipped, mask = inject_flips(pairs, options.flip_prob, options.seed, perfect_epsilon=options.perfect_epsilon)
        save_preferences(flipped, options.out)
        save_flip_mask(flipped, mask, options.out.with_name(f"{options.out.stem}_flip_mask.csv"))
        write_manifest(
            options.out.parent,
            f"inject-flips:{options.out.stem}",
            options.seed,
            {"prefs": options.prefs},
            {"output": options.out.name, "flip_prob": options.flip_prob, "perfect_epsilon": options.perfect_epsilon},
        )
        fraction = float(mask.mean()) if len(mask) else 0.0
        self._console.info_print("INJECT-FLIPS", f"Flipped {int(mask.sum())} of {len(mask)} pairs ({fraction:.4f}).")

    # Training verbs.

    def train_oracle(self, options: TrainOracleOptions) -> None:
        """Train the preference oracle and save it under `<out>/checkpoints/oracle.ckpt`."""
        prepared = load_prepared(options.data)
        config = OracleConfig(
            seed=options.seed,
            epochs=options.epochs,
            batch_size=options.batch_size,
            lr=options.lr,
            weight_decay=options.weight_decay,
            width=options.width,
        )
        checkpoint, history = train_oracle(prepared.examples, prepared.catalogue, config, self._console)
        save_checkpoint(checkpoint, options.out / CHECKPOINTS_DIRECTORY / "oracle.ckpt")
        write_metrics(history, options.out / "oracle_metrics.csv")
        write_manifest(options.out, "train-oracle", options.seed, {"data": options.data})

    def train_sft(self, options: TrainSftOptions) -> None:
        """Supervised fine-tuning into `<run-dir>/checkpoints/sft.ckpt`."""
        config = resolve_run_config(options, "sft")
        prepared = load_prepared(options.data)
        self._write_config(config, options.run_dir)
        result = self._trainer.train_sft(config, prepared.examples, prepared.catalogue)
        self._save_run(result.checkpoint, result.metrics, options.run_dir, "sft")
        write_manifest(options.run_dir, "train-sft", config.seed, {"data": options.data, "config": options.config})

    def train_po(self, options: TrainPoOptions) -> None:
        """Preference optimization into `<run-dir>/checkpoints/po.ckpt`."""
        config = resolve_run_config(options, "po")
        sft = load_stage_checkpoint(options.sft_ckpt, "sft")
        pairs = load_preferences(options.prefs)
        self._write_config(config, options.run_dir)
        result = self._trainer.train_po(config, pairs, sft)
        self._save_run(result.checkpoint, result.metrics, options.run_dir, "po")
        write_manifest(
            options.run_dir,
            "train-po",
            config.seed,
            {"prefs": options.prefs, "sft_ckpt": options.sft_ckpt, "config": options.config},
        )

    def sweep(self, options: SweepOptions) -> None:
        """Grid search on the validation split; writes `report.csv` and the best `config.txt`."""
        stage: Stage = "po" if options.prefs is not None else "sft"
        base = resolve_run_config(options, stage)
        prepared = load_prepared(options.data)
        pairs = [] if options.prefs is None else load_preferences(options.prefs)
        sft = None if options.sft_ckpt is None else load_stage_checkpoint(options.sft_ckpt, "sft", prepared.catalogue)
        result = self._trainer.sweep(
            base,
            sweep_grid(options, stage),
            options.metric,
            prepared.examples,
            prepared.catalogue,
            pairs=pairs,
            sft=sft,
            seeds=options.seeds,
        )
        options.run_dir.mkdir(parents=True, exist_ok=True)
        result.report.to_csv(options.run_dir / REPORT_FILE, index=False, float_format="%.6f", lineterminator="\n")
        self._write_config(result.best, options.run_dir)
        write_manifest(
            options.run_dir,
            "sweep",
            base.seed,
            {"data": options.data, "config": options.config, "prefs": options.prefs, "sft_ckpt": options.sft_ckpt},
        )
        self._console.info_print("SWEEP", f"Best configuration written to {options.run_dir / CONFIG_FILE}.")

    # Reporting verbs.

    def evaluate(self, options: EvaluateOptions) -> None:
        """Evaluate a checkpoint on the test split and write the metric and bias reports into the run directory."""
        prepared = load_prepared(options.data)
        checkpoint = load_checkpoint(options.ckpt)
        if checkpoint.model.item_ids != prepared.catalogue:
            error_message = f"{options.ckpt} was trained on a different catalogue."
            raise ValueError(error_message)
        test = [example for example in prepared.examples if example.split == "test"]
        report = evaluate_run(
            checkpoint,
            test,
            set(options.modes),
            store=prepared.store,
            pop=prepared.pop,
            records=prepared.records,
            ks=options.ks,
        )
        write_evaluation(report, options.run_dir)
        write_manifest(options.run_dir, "evaluate", checkpoint.meta.seed, {"data": options.data, "ckpt": options.ckpt})
        row = report.summary.iloc[0]
        self._console.table_print(
            f"Test evaluation ({len(test)} examples)",
            list(report.summary.columns),
            [[format_fixed(float(row[column]), 4) for column in report.summary.columns]],
        )
        if report.bias.skipped:
            self._console.info_print("EVALUATE", f"{report.bias.skipped} examples skipped for semantic bias.")

    def report(self, options: ReportOptions) -> None:
        """Merge run directories into comparison tables."""
        merged = merge_runs(options.run_dirs)
        for run_dir, reason in merged.skipped:
            self._console.error_print("REPORT", f"Skipped {run_dir}: {reason}.")
        write_report(merged, options.out)
        write_manifest(options.out, "report", None, {})
        self._console.info_print("REPORT", f"Merged {len(merged.comparison)} runs into {options.out}.")

    # Helper methods.

    @staticmethod
    def _write_config(config: RunConfig, run_dir: Path) -> None:
        run_dir.mkdir(parents=True, exist_ok=True)
        _ = (run_dir / CONFIG_FILE).write_text(format_key_value(config.to_pairs()), encoding="utf-8")

    @staticmethod
    def _save_run(checkpoint: Checkpoint, metrics: pd.DataFrame, run_dir: Path, stage: Stage) -> None:
        save_checkpoint(checkpoint, run_dir / CHECKPOINTS_DIRECTORY / f"{stage}.ckpt")
        write_metrics(metrics, run_dir / METRICS_FILE)
