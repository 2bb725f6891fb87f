"""Command-line interface for RosePO Lab.

One subcommand per pipeline stage. Run-configuration flags of the training verbs are collected as overrides of the
optional `--config` file, so flags win over file values.

Usage:
    Instantiate CLI and call `parse_args()` to get the validated options of the chosen verb.

    ```python
    CLI().parse_args()
    ```
"""

from argparse import ArgumentParser, Namespace
from collections.abc import Sequence
from pathlib import Path
from typing import final

from pydantic import TypeAdapter, ValidationError

from rosepo_lab.__about__ import __version__ as version
from rosepo_lab.models.options import Options
from rosepo_lab.utils.converters import parse_key_value
from rosepo_lab.utils.startup import get_objective_display_to_cli_name, get_sampler_cli_names

# Run-configuration flag to configuration key.
RUN_FLAGS: dict[str, tuple[str, type, str]] = {
    "seed": ("seed", int, "Seed for initialization, shuffling, and subsetting."),
    "objective": ("kind", str, "Preference objective."),
    "beta": ("beta", float, "Inverse temperature of the implicit reward."),
    "epsilon": ("epsilon", float, "Assumed noise rate of cDPO and rDPO."),
    "tau": ("tau", float, "IPO regularization target."),
    "alpha": ("alpha", float, "RPO likelihood weight."),
    "lambda": ("lambda", float, "CPO behavior-cloning weight."),
    "gamma": ("gamma", float, "SimPO target margin."),
    "n-negatives": ("n_negatives", int, "Rejected items per example for S-DPO."),
    "batch-size": ("batch_size", int, "Examples per micro-batch."),
    "lr": ("lr", float, "Peak learning rate. Default: 1e-3 for SFT, 1e-4 for PO."),
    "warmup-fraction": ("warmup_fraction", float, "Fraction of steps with linear warm-up."),
    "epochs": ("epochs", int, "Passes over the training data."),
    "data-fraction": ("data_fraction", float, "Fraction of the training data used, in (0, 1]."),
    "accumulation-steps": ("accumulation_steps", int, "Micro-batches per optimizer step."),
    "weight-decay": ("weight_decay", float, "L2 weight decay added to the gradient."),
    "width": ("width", int, "Hidden width of the policy."),
}
OVERRIDE_PREFIX = "override_"


def _parse_grid(entries: Sequence[str]) -> dict[str, list[str]]:
    grid: dict[str, list[str]] = {}
    for entry in entries:
        key, separator, values = entry.partition("=")
        if not separator or not key.strip() or not values.strip():
            error_message = f"Grid entry {entry!r} should look like key=v1,v2."
            raise ValueError(error_message)
        grid[key.strip()] = [value.strip() for value in values.split(",") if value.strip()]
    return grid


@final
class CLI:
    """Command-line interface for RosePO Lab.

    Configures the CLI parser and its subcommands.
    """

    def __init__(self) -> None:
        """Initialize CLI parser."""

        self._parser = ArgumentParser(
            description="RosePO Lab: preference alignment for sequential recommenders.",
            prog="rosepo-lab",
        )
        _ = self._parser.add_argument(
            "-v",
            "--version",
            action="version",
            version=f"RosePO Lab v{version}",
            help="Print version and exit.",
        )
        common = ArgumentParser(add_help=False)
        _ = common.add_argument("-d", "--debug", dest="debug", action="store_true", help="Enable debug mode.")
        _ = common.add_argument("-q", "--quiet", dest="quiet", action="store_true", help="Hide progress bars.")

        verbs = self._parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

        prepare = verbs.add_parser("prepare", parents=[common], help="Ingest, window, split, and draw candidates.")
        _ = prepare.add_argument("--interactions", type=Path, required=True, help="Interactions TSV.")
        _ = prepare.add_argument("--items", type=Path, required=True, help="Items TSV.")
        _ = prepare.add_argument(
            "--embeddings", type=Path, help="Item embeddings. Default: co-occurrence SVD fallback."
        )
        _ = prepare.add_argument("--min-rating", dest="min_rating", type=int, default=0, help="Default: 0.")
        _ = prepare.add_argument(
            "--min-user-interactions",
            dest="min_user_interactions",
            type=int,
            default=11,
            help="Drop users with fewer interactions. Default: 11.",
        )
        self._add_seed(prepare)
        self._add_out(prepare)

        generate = verbs.add_parser("generate", parents=[common], help="Write a planted-structure synthetic dataset.")
        _ = generate.add_argument("--n-users", dest="n_users", type=int, default=5000, help="Default: 5000.")
        _ = generate.add_argument("--n-items", dest="n_items", type=int, default=500, help="Default: 500.")
        _ = generate.add_argument(
            "--sequence-length", dest="sequence_length", type=int, default=20, help="Default: 20."
        )
        _ = generate.add_argument("--rho", type=float, default=0.8, help="Kernel-following probability. Default: 0.8.")
        _ = generate.add_argument("--zipf", type=float, default=0.0, help="Popularity exponent. Default: 0.")
        _ = generate.add_argument("--clusters", type=int, default=10, help="Semantic clusters. Default: 10.")
        self._add_seed(generate)
        self._add_out(generate)

        oracle = verbs.add_parser("train-oracle", parents=[common], help="Train the preference oracle.")
        self._add_data(oracle)
        _ = oracle.add_argument("--epochs", type=int, default=10, help="Default: 10.")
        _ = oracle.add_argument("--batch-size", dest="batch_size", type=int, default=256, help="Default: 256.")
        _ = oracle.add_argument("--lr", type=float, default=1e-3, help="Default: 1e-3.")
        _ = oracle.add_argument("--weight-decay", dest="weight_decay", type=float, default=0.0, help="Default: 0.")
        _ = oracle.add_argument("--width", type=int, default=64, help="Default: 64.")
        self._add_seed(oracle)
        self._add_out(oracle)

        sft = verbs.add_parser("train-sft", parents=[common], help="Supervised fine-tuning on the training split.")
        self._add_data(sft)
        self._add_run_flags(sft)

        prefs = verbs.add_parser("build-prefs", parents=[common], help="Build preference pairs.")
        self._add_data(prefs)
        _ = prefs.add_argument("--strategy", choices=get_sampler_cli_names(), required=True, help="Negative sampler.")
        _ = prefs.add_argument("--sft-ckpt", dest="sft_ckpt", type=Path, help="SFT checkpoint (self-hard, mixed).")
        _ = prefs.add_argument("--oracle-ckpt", dest="oracle_ckpt", type=Path, help="Oracle checkpoint for flip-rates.")
        _ = prefs.add_argument(
            "--n-negatives", dest="n_negatives", type=int, default=3, help="Rejected items per pair. Default: 3."
        )
        self._add_seed(prefs)
        self._add_out(prefs)

        flips = verbs.add_parser("inject-flips", parents=[common], help="Swap preference labels at random.")
        _ = flips.add_argument("--prefs", type=Path, required=True, help="Clean preference file.")
        _ = flips.add_argument("--flip-prob", dest="flip_prob", type=float, required=True, help="In [0, 0.5).")
        _ = flips.add_argument(
            "--perfect-epsilon",
            dest="perfect_epsilon",
            action="store_true",
            help="Set every flip-rate to the flip probability.",
        )
        self._add_seed(flips)
        self._add_out(flips)

        po = verbs.add_parser("train-po", parents=[common], help="Preference optimization from an SFT checkpoint.")
        _ = po.add_argument("--prefs", type=Path, required=True, help="Preference file.")
        _ = po.add_argument("--sft-ckpt", dest="sft_ckpt", type=Path, required=True, help="SFT checkpoint.")
        self._add_run_flags(po)

        evaluate = verbs.add_parser("evaluate", parents=[common], help="Rank the test split and measure bias.")
        self._add_data(evaluate)
        _ = evaluate.add_argument("--ckpt", type=Path, required=True, help="Checkpoint to evaluate.")
        _ = evaluate.add_argument("--run-dir", dest="run_dir", type=Path, required=True, help="Output run directory.")
        _ = evaluate.add_argument(
            "--modes",
            nargs="+",
            choices=["given", "semantic_hard", "all_items"],
            default=["given"],
            help="Candidate sources. Default: given.",
        )
        _ = evaluate.add_argument(
            "--ks", nargs="+", type=int, default=[1, 5, 10, 20], help="Cutoffs. Default: 1 5 10 20."
        )

        sweep = verbs.add_parser("sweep", parents=[common], help="Grid search on the validation split.")
        self._add_data(sweep)
        _ = sweep.add_argument(
            "--grid", nargs="+", default=[], metavar="KEY=V1,V2", help="Configuration key and candidate values."
        )
        _ = sweep.add_argument("--metric", default="hr@1", help="Selection metric (hr@K or ndcg@K). Default: hr@1.")
        _ = sweep.add_argument("--seeds", type=int, default=1, help="Seeds per grid cell. Default: 1.")
        _ = sweep.add_argument("--prefs", type=Path, help="Preference file; switches the sweep to PO.")
        _ = sweep.add_argument("--sft-ckpt", dest="sft_ckpt", type=Path, help="SFT checkpoint for PO sweeps.")
        self._add_run_flags(sweep)

        report = verbs.add_parser("report", parents=[common], help="Merge evaluated runs into comparison tables.")
        _ = report.add_argument("--run-dirs", dest="run_dirs", nargs="+", type=Path, required=True, help="Run dirs.")
        self._add_out(report)

    def parse_args(self, argv: Sequence[str] | None = None) -> Options:
        """Parse arguments and return them

        Args:
            argv: Arguments, default: process arguments.

        Returns:
            Validated options of the chosen verb.
        """
        namespace = self._parser.parse_args(argv)
        if namespace.command == "build-prefs":  # pyright: ignore [reportAny]
            strategy: str = namespace.strategy  # pyright: ignore [reportAny]
            if strategy in {"self-hard", "mixed"} and namespace.sft_ckpt is None:  # pyright: ignore [reportAny]
                self._parser.error(f"--strategy {strategy} needs --sft-ckpt.")
        try:
            fields = self._fields(namespace)
        except ValueError as e:
            self._parser.error(str(e))
        try:
            return TypeAdapter[Options](Options).validate_python(fields)
        except ValidationError as e:
            self._parser.error(str(e))

    # Helper methods.
    @staticmethod
    def _add_seed(parser: ArgumentParser) -> None:
        _ = parser.add_argument("--seed", type=int, default=0, help="Seed for every random draw. Default: 0.")

    @staticmethod
    def _add_out(parser: ArgumentParser) -> None:
        _ = parser.add_argument("--out", type=Path, required=True, help="Output path.")

    @staticmethod
    def _add_data(parser: ArgumentParser) -> None:
        _ = parser.add_argument("--data", type=Path, required=True, help="Prepared data directory.")

    @staticmethod
    def _add_run_flags(parser: ArgumentParser) -> None:
        _ = parser.add_argument("--run-dir", dest="run_dir", type=Path, required=True, help="Run directory.")
        _ = parser.add_argument("--config", type=Path, help="Run configuration file (key = value).")
        for flag, (key, kind, description) in RUN_FLAGS.items():
            if flag == "objective":
                _ = parser.add_argument(
                    f"--{flag}",
                    dest=f"{OVERRIDE_PREFIX}{key}",
                    choices=sorted(get_objective_display_to_cli_name().values()),
                    help=description,
                )
            else:
                _ = parser.add_argument(f"--{flag}", dest=f"{OVERRIDE_PREFIX}{key}", type=kind, help=description)
        _ = parser.add_argument(
            "--run-strategy",
            dest=f"{OVERRIDE_PREFIX}strategy",
            help="Sampling strategy label recorded with the run.",
        )
        _ = parser.add_argument(
            "--set", dest="set", action="append", default=[], metavar="KEY=VALUE", help="Any configuration key."
        )

    @staticmethod
    def _fields(namespace: Namespace) -> dict[str, object]:
        """Turn a namespace into model fields, folding run flags into `overrides`."""
        fields: dict[str, object] = {}
        overrides: dict[str, str] = {}
        for name, value in vars(namespace).items():  # pyright: ignore [reportAny]
            if name.startswith(OVERRIDE_PREFIX):
                if value is not None:
                    overrides[name.removeprefix(OVERRIDE_PREFIX)] = str(value)  # pyright: ignore [reportAny]
            elif name == "set":
                overrides.update(parse_key_value("\n".join(value)))  # pyright: ignore [reportAny]
            elif name == "grid":
                fields[name] = _parse_grid(value)  # pyright: ignore [reportAny]
            else:
                fields[name] = value
        if "run_dir" in fields and "config" in fields:
            fields["overrides"] = overrides
        return fields
