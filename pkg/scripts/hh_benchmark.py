"""Helpful-and-harmless benchmark on planted-structure data.

Trains SFT and the preference-optimized arms over several seeds and checks the directional claims: helpfulness against
SFT and uniform DPO, robustness to flipped labels, popularity and semantic bias reduction, the hybrid strategy, and the
preference data-scale trend. Every leg is printed with its value and reference; the exit status is 1 if any leg fails.

Usage:
    ```
    hatch run benchmark --seeds 5
    hatch run benchmark --quick
    ```
"""

from argparse import ArgumentParser, Namespace
from collections.abc import Callable
from dataclasses import dataclass, field
from operator import ge, gt, le, lt
from pathlib import Path
from tempfile import TemporaryDirectory
from typing import final

import numpy as np
import pandas as pd

from rosepo_lab.back_end.dataset import PopularityTable, attach_candidates, ingest, popularity, window_and_split
from rosepo_lab.back_end.embeddings import EmbeddingStore
from rosepo_lab.back_end.evaluation import evaluate_run, metric_value
from rosepo_lab.back_end.oracle import train_oracle
from rosepo_lab.back_end.policy import Checkpoint, PolicyModel
from rosepo_lab.back_end.prefdata import attach_epsilons, build_preferences
from rosepo_lab.back_end.synthetic import INTERACTIONS_FILE, ITEMS_FILE, generate, inject_flips, write_synthetic
from rosepo_lab.back_end.trainer import PO_LEARNING_RATE, Trainer
from rosepo_lab.models.config import ObjectiveConfig, ObjectiveKind, OracleConfig, RunConfig, SyntheticSpec
from rosepo_lab.models.data import PreferencePair, SequenceExample
from rosepo_lab.utils.base_sampler import SamplingContext
from rosepo_lab.utils.console import Console

RELATIONS: dict[str, Callable[[float, float], bool]] = {">": gt, ">=": ge, "<": lt, "<=": le}
FLIP_PROB = 0.3
SMALL_FRACTION = 0.2
ARM_STRATEGIES = {"rosepo_h": "self-hard", "rosepo_s": "semantic", "rosepo_p": "popular"}


@dataclass(frozen=True)
class Scenario:
    """A generated dataset prepared for training."""

    name: str
    examples: list[SequenceExample]
    catalogue: tuple[str, ...]
    records: dict[str, frozenset[str]]
    pop: PopularityTable
    store: EmbeddingStore

    @property
    def test(self) -> list[SequenceExample]:
        return [example for example in self.examples if example.split == "test"]


def prepare_scenario(name: str, spec: SyntheticSpec) -> Scenario:
    data = generate(spec)
    with TemporaryDirectory() as directory:
        write_synthetic(data, Path(directory))
        dataset = ingest(Path(directory) / INTERACTIONS_FILE, Path(directory) / ITEMS_FILE, min_rating=0)
    examples = attach_candidates(dataset, window_and_split(dataset), spec.seed)
    rows = [int(np.flatnonzero(data.items["item_id"] == item_id)[0]) for item_id in dataset.catalogue]
    return Scenario(
        name=name,
        examples=examples,
        catalogue=dataset.catalogue,
        records={user_id: dataset.record(user_id) for user_id in dataset.by_user},
        pop=popularity(dataset, examples),
        store=EmbeddingStore(dataset.catalogue, data.vectors[rows]),
    )


@dataclass
class Results:
    """One row per (scenario, arm, seed)."""

    rows: list[dict[str, object]] = field(default_factory=list)

    def mean(self, scenario: str, arm: str, column: str) -> float:
        frame = pd.DataFrame(self.rows)
        selected = frame[(frame["scenario"] == scenario) & (frame["arm"] == arm)]
        return float(selected[column].mean())


@final
class Benchmark:
    def __init__(self, console: Console, args: Namespace) -> None:
        self._console = console
        self._trainer = Trainer(console)
        self._args = args
        self.results = Results()

    def run_seed(self, scenario: Scenario, seed: int, arms: list[str]) -> None:
        """Train SFT, the oracle, and the requested arms for one seed, recording test metrics."""
        args = self._args
        sft_config = RunConfig(seed=seed, width=args.width, epochs=args.sft_epochs, batch_size=args.batch_size)
        sft = self._trainer.train_sft(sft_config, scenario.examples, scenario.catalogue).checkpoint
        self._record(scenario, "sft", seed, sft)
        oracle, _ = train_oracle(
            scenario.examples,
            scenario.catalogue,
            OracleConfig(seed=seed, epochs=args.oracle_epochs, width=args.width, batch_size=args.batch_size),
            self._console,
        )

        for arm in arms:
            match arm:
                case "dpo_uniform":
                    pairs = self._pairs(scenario, "uniform", sft.model, None, seed)
                    checkpoint = self._po(pairs, sft, "dpo", seed)
                case "rosepo_noisy" | "dpo_noisy":
                    clean = self._pairs(scenario, "uniform", sft.model, None, seed)
                    noisy, _ = inject_flips(clean, FLIP_PROB, seed, perfect_epsilon=True)
                    checkpoint = self._po(noisy, sft, "rosepo" if arm == "rosepo_noisy" else "dpo", seed)
                case "rosepo_h_small":
                    pairs = self._pairs(scenario, "self-hard", sft.model, oracle.model, seed)
                    checkpoint = self._po(pairs, sft, "rosepo", seed, data_fraction=SMALL_FRACTION)
                case _:
                    strategy = ARM_STRATEGIES.get(arm, "mixed")
                    pairs = self._pairs(scenario, strategy, sft.model, oracle.model, seed)
                    checkpoint = self._po(pairs, sft, "rosepo", seed)
            self._record(scenario, arm, seed, checkpoint)

    # Helper methods.
    def _pairs(
        self, scenario: Scenario, strategy: str, sft: PolicyModel, oracle: PolicyModel | None, seed: int
    ) -> list[PreferencePair]:
        context = SamplingContext(
            scenario.catalogue, scenario.records, sft_model=sft, store=scenario.store, pop=scenario.pop
        )
        pairs = build_preferences(scenario.examples, strategy, context, seed)
        return pairs if oracle is None else attach_epsilons(pairs, oracle)

    def _po(
        self, pairs: list[PreferencePair], sft: Checkpoint, kind: ObjectiveKind, seed: int, data_fraction: float = 1.0
    ) -> Checkpoint:
        args = self._args
        config = RunConfig(
            seed=seed,
            stage="po",
            objective=ObjectiveConfig(kind=kind, beta=args.beta),
            lr=PO_LEARNING_RATE,
            epochs=args.po_epochs,
            batch_size=args.batch_size,
            width=args.width,
            data_fraction=data_fraction,
        )
        return self._trainer.train_po(config, pairs, sft).checkpoint

    def _record(self, scenario: Scenario, arm: str, seed: int, checkpoint: Checkpoint) -> None:
        report = evaluate_run(
            checkpoint,
            scenario.test,
            {"given", "semantic_hard"},
            store=scenario.store,
            pop=scenario.pop,
            records=scenario.records,
        )
        summary = report.summary.iloc[0]
        row: dict[str, object] = {
            "scenario": scenario.name,
            "arm": arm,
            "seed": seed,
            "hr@1": float(summary["HR@1"]),
            "semantic_bias": float(summary["Sem. Bias"]),
            "popularity_bias": float(summary["Pop. Bias"]),
            "semantic_hard_hr@1": metric_value(report.metrics["semantic_hard"], "hr", 1),
        }
        self.results.rows.append(row)
        self._console.info_print(arm.upper(), f"seed {seed}: HR@1 {row['hr@1']:.4f}.")


def legs(results: Results) -> list[tuple[str, str, float, str, float]]:
    """Criterion, description, value, relation, and reference for every directional leg."""

    def compare(criterion: str, scenario: str, column: str, arm: str, relation: str, reference: str):
        description = f"{arm} {column} {relation} {reference} ({scenario})"
        value = results.mean(scenario, arm, column)
        return criterion, description, value, relation, results.mean(scenario, reference, column)

    return [
        compare("helpfulness", "base", "hr@1", "rosepo_h", ">", "sft"),
        compare("helpfulness", "base", "hr@1", "rosepo_h", ">", "dpo_uniform"),
        compare("noise robustness", "base", "hr@1", "rosepo_noisy", ">", "dpo_noisy"),
        compare("popularity bias", "zipf", "popularity_bias", "rosepo_p", "<", "sft"),
        compare("semantic bias", "base", "semantic_bias", "rosepo_s", "<", "sft"),
        compare("semantic bias", "base", "semantic_hard_hr@1", "rosepo_s", ">", "sft"),
        compare("hybrid", "base", "hr@1", "rosepo_m", ">=", "sft"),
        compare("hybrid", "base", "semantic_bias", "rosepo_m", "<=", "sft"),
        compare("hybrid", "base", "popularity_bias", "rosepo_m", "<=", "sft"),
        compare("data scale", "base", "hr@1", "rosepo_h", ">", "rosepo_h_small"),
    ]


def parse_args() -> Namespace:
    parser = ArgumentParser(description="Directional helpful-and-harmless benchmark on synthetic data.")
    _ = parser.add_argument("--seeds", type=int, default=5, help="Seeds per arm. Default: 5.")
    _ = parser.add_argument("--n-users", dest="n_users", type=int, default=5000, help="Default: 5000.")
    _ = parser.add_argument("--n-items", dest="n_items", type=int, default=500, help="Default: 500.")
    _ = parser.add_argument("--width", type=int, default=32, help="Policy and oracle width. Default: 32.")
    _ = parser.add_argument("--batch-size", dest="batch_size", type=int, default=256, help="Default: 256.")
    _ = parser.add_argument("--sft-epochs", dest="sft_epochs", type=int, default=5, help="Default: 5.")
    _ = parser.add_argument("--po-epochs", dest="po_epochs", type=int, default=2, help="Default: 2.")
    _ = parser.add_argument("--oracle-epochs", dest="oracle_epochs", type=int, default=5, help="Default: 5.")
    _ = parser.add_argument("--beta", type=float, default=1.0, help="Preference inverse temperature. Default: 1.")
    _ = parser.add_argument("--quick", action="store_true", help="Small data and two seeds, for a smoke run.")
    _ = parser.add_argument("--out", type=Path, help="Write per-seed results and legs as CSV here.")
    _ = parser.add_argument("-q", "--quiet", action="store_true", help="Hide progress bars.")
    args = parser.parse_args()
    if args.quick:
        args.seeds, args.n_users, args.n_items, args.width = 2, 400, 80, 16
    return args


def main() -> None:
    args = parse_args()
    console = Console(enable_debug=False, quiet=args.quiet)
    benchmark = Benchmark(console, args)
    base = SyntheticSpec(n_users=args.n_users, n_items=args.n_items, rho=0.8, clusters=10)
    zipf = base.model_copy(update={"zipf": 1.2})
    scenarios = [
        (
            prepare_scenario("base", base),
            ["dpo_uniform", "rosepo_h", "rosepo_h_small", "rosepo_s", "rosepo_m", "rosepo_noisy", "dpo_noisy"],
        ),
        (prepare_scenario("zipf", zipf), ["rosepo_p"]),
    ]
    for scenario, arms in scenarios:
        for seed in range(args.seeds):
            benchmark.run_seed(scenario, seed, arms)

    table = legs(benchmark.results)
    failures = [row for row in table if not RELATIONS[row[3]](row[2], row[4])]
    failed = {(criterion, description) for criterion, description, *_ in failures}

    def verdict(criterion: str, description: str) -> str:
        return "FAIL" if (criterion, description) in failed else "pass"

    console.table_print(
        f"Helpful-and-harmless benchmark ({args.seeds} seeds)",
        ["criterion", "leg", "value", "reference", "result"],
        [
            [criterion, description, f"{value:.4f}", f"{reference:.4f}", verdict(criterion, description)]
            for criterion, description, value, _, reference in table
        ],
    )
    for criterion, description, _, _, _ in failures:
        console.error_print(criterion.upper(), f"Violated: {description}.")

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(benchmark.results.rows).to_csv(args.out / "benchmark_runs.csv", index=False, float_format="%.6f")
        pd.DataFrame(table, columns=["criterion", "leg", "value", "relation", "reference"]).to_csv(
            args.out / "benchmark_legs.csv", index=False, float_format="%.6f"
        )
    raise SystemExit(1 if failures else 0)


if __name__ == "__main__":
    main()
