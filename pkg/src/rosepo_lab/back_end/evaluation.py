"""Evaluation protocols: candidate ranking, semantic-hard ranking, all-ranking, and the harmlessness metrics.

Every ranking sorts by descending score with ties broken by item ID, so results are deterministic.

Usage:
    ```python
    report = evaluate_run(checkpoint, test_examples, {"given", "all_items"}, store=store, pop=pop, records=records)
    write_evaluation(report, run_dir)
    ```
"""

from collections.abc import Collection, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Self, final

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import Field, model_validator

from rosepo_lab.back_end.dataset import PopularityTable
from rosepo_lab.back_end.embeddings import EmbeddingStore, history_similarity, semantic_hard_candidates
from rosepo_lab.back_end.policy import Checkpoint, PolicyModel, batch_scores
from rosepo_lab.models.data import LabModel, SequenceExample
from rosepo_lab.utils.constants import (
    BIAS_FILE,
    BIAS_SUMMARY_FILE,
    CANDIDATE_COUNT,
    DEFAULT_KS,
    SIMILARITY_SINGULARITY,
    SUMMARY_FILE,
)
from rosepo_lab.utils.converters import format_fixed

CandidateSource = Literal["given", "semantic_hard", "all_items"]
CANDIDATE_SOURCES: tuple[CandidateSource, ...] = ("given", "semantic_hard", "all_items")
SUMMARY_COLUMNS = ("HR@1", "HR@5", "N@5", "N@10", "Sem. Bias", "Pop. Bias")
EVALUATION_BATCH = 512
DECILES = tuple(range(10, 100, 10))


class RankingResult(LabModel):
    """One example's ranked candidate universe."""

    example_id: int
    ranked: tuple[str, ...]
    rank_of_target: int = Field(ge=1)
    top1: str

    @model_validator(mode="after")
    def _check_ranking(self) -> Self:
        if self.rank_of_target > len(self.ranked) or self.ranked[0] != self.top1:
            error_message = f"Example {self.example_id}: inconsistent ranking."
            raise ValueError(error_message)
        return self


def _ranking(example: SequenceExample, items: NDArray[np.str_], scores: NDArray[np.float64]) -> RankingResult:
    # lexsort keys run from least to most significant.
    order = np.lexsort((items, -scores))
    ranked = tuple(str(item_id) for item_id in items[order])
    if example.target not in ranked:
        error_message = f"Example {example.example_id}: target {example.target} is outside the ranked universe."
        raise ValueError(error_message)
    return RankingResult(
        example_id=example.example_id, ranked=ranked, rank_of_target=ranked.index(example.target) + 1, top1=ranked[0]
    )


def _universes(
    examples: Sequence[SequenceExample],
    candidate_source: CandidateSource,
    store: EmbeddingStore | None,
    records: Mapping[str, frozenset[str]] | None,
) -> list[tuple[str, ...]] | None:
    if candidate_source == "all_items":
        return None
    if candidate_source == "given":
        return [example.candidates for example in examples]
    if store is None:
        error_message = "Semantic-hard ranking needs item embeddings."
        raise ValueError(error_message)
    records = records or {}
    return [
        tuple(
            semantic_hard_candidates(
                store, example, CANDIDATE_COUNT, example.example_id, records.get(example.user_id, frozenset())
            )
        )
        for example in examples
    ]


def rank_examples(
    model: PolicyModel,
    examples: Sequence[SequenceExample],
    candidate_source: CandidateSource = "given",
    store: EmbeddingStore | None = None,
    records: Mapping[str, frozenset[str]] | None = None,
) -> list[RankingResult]:
    """Rank a batch of examples.

    Args:
        model: Policy to evaluate.
        examples: Examples to rank.
        candidate_source: Given candidates, semantic-hard candidates, or the whole catalogue.
        store: Embeddings, needed for semantic-hard ranking.
        records: User records, excluded from semantic-hard candidates.

    Returns:
        One result per example, in input order.
    """
    universes = _universes(examples, candidate_source, store, records)
    catalogue = np.array(model.item_ids)
    results: list[RankingResult] = []
    for start in range(0, len(examples), EVALUATION_BATCH):
        chunk = examples[start : start + EVALUATION_BATCH]
        histories = np.stack([model.rows(example.history) for example in chunk])
        if universes is None:
            scores, _ = batch_scores(model, histories, None)
            results.extend(_ranking(example, catalogue, row) for example, row in zip(chunk, scores, strict=True))
            continue
        chunk_universes = universes[start : start + EVALUATION_BATCH]
        if len({len(universe) for universe in chunk_universes}) == 1:
            candidates = np.stack([model.rows(universe) for universe in chunk_universes])
            scores, _ = batch_scores(model, histories, candidates)
            rows = list(scores)
        else:
            rows = [
                batch_scores(model, histories[offset : offset + 1], model.rows(universe)[None])[0][0]
                for offset, universe in enumerate(chunk_universes)
            ]
        results.extend(
            _ranking(example, np.array(universe), row)
            for example, universe, row in zip(chunk, chunk_universes, rows, strict=True)
        )
    return results


def rank(
    model: PolicyModel,
    example: SequenceExample,
    candidate_source: CandidateSource = "given",
    store: EmbeddingStore | None = None,
    user_record: Collection[str] = (),
) -> RankingResult:
    """Rank one example's candidate universe by descending score.

    Args:
        model: Policy to evaluate.
        example: Example to rank.
        candidate_source: Given candidates, semantic-hard candidates, or the whole catalogue.
        store: Embeddings, needed for semantic-hard ranking.
        user_record: The user's interacted items, excluded from semantic-hard candidates.

    Returns:
        Ranking result.
    """
    records = {example.user_id: frozenset(user_record)}
    return rank_examples(model, [example], candidate_source, store, records)[0]


def hr_ndcg(results: Sequence[RankingResult], ks: Sequence[int] = DEFAULT_KS) -> pd.DataFrame:
    """Hit ratio and NDCG with a single relevant item per example.

    Args:
        results: Nonempty ranking results.
        ks: Cutoffs.

    Returns:
        Frame with columns `metric`, `k`, `value`; HR rows first, then NDCG rows, each in cutoff order.
    """
    if not results:
        error_message = "Cannot compute metrics over zero ranking results."
        raise ValueError(error_message)
    ranks = np.array([result.rank_of_target for result in results])
    gains = 1 / np.log2(ranks + 1)
    cutoffs = sorted(set(ks))
    rows = [("hr", k, float(np.mean(ranks <= k))) for k in cutoffs]
    rows += [("ndcg", k, float(np.mean(np.where(ranks <= k, gains, 0.0)))) for k in cutoffs]
    return pd.DataFrame(rows, columns=["metric", "k", "value"])


def metric_value(table: pd.DataFrame, metric: str, k: int) -> float:
    """Look up one value in a metric table, such as `("hr", 1)`."""
    match = table[(table["metric"] == metric) & (table["k"] == k)]
    if match.empty:
        error_message = f"Metric table has no {metric}@{k}."
        raise KeyError(error_message)
    return float(match["value"].iloc[0])


def semantic_bias(store: EmbeddingStore, example: SequenceExample, recommended: str) -> float | None:
    """Relative excess history similarity of the recommended item over the ground-truth item.

    Args:
        store: Embedding store.
        example: Example supplying history and target.
        recommended: Recommended item.

    Returns:
        Bias, or None when the target's similarity is too close to zero to divide by.
    """
    target_similarity = history_similarity(store, example.history, example.target)
    if abs(target_similarity) < SIMILARITY_SINGULARITY:
        return None
    return (history_similarity(store, example.history, recommended) - target_similarity) / target_similarity


def popularity_bias(pop: PopularityTable, example: SequenceExample, recommended: str) -> float:
    """Log-popularity of the recommended item minus the mean log-popularity of the history."""
    history = float(np.mean([pop.log_popularity(item_id) for item_id in example.history]))
    return pop.log_popularity(recommended) - history


@final
@dataclass(frozen=True)
class BiasReport:
    """Per-example harmlessness metrics.

    Attributes:
        rows: Frame with `example_id`, `semantic_bias` (NaN when skipped), `popularity_bias`.
        skipped: Examples whose target similarity was singular.
    """

    rows: pd.DataFrame
    skipped: int

    def summary(self) -> pd.DataFrame:
        """Count, mean, positive fraction, and deciles of both bias columns.

        Returns:
            Frame indexed by statistic name, recomputable from `rows`.
        """
        columns: dict[str, list[float]] = {}
        for column in ("semantic_bias", "popularity_bias"):
            values = self.rows[column].dropna().to_numpy(dtype=np.float64)
            stats = [float(len(values))]
            if len(values):
                stats += [float(values.mean()), float((values > 0).mean())]
                stats += [float(q) for q in np.percentile(values, DECILES)]
            else:
                stats += [float("nan")] * (2 + len(DECILES))
            columns[column] = stats
        index = ["count", "mean", "positive_fraction", *(f"p{decile}" for decile in DECILES)]
        frame = pd.DataFrame(columns, index=index)
        frame.index.name = "statistic"
        return frame

    def mean(self, column: str) -> float:
        """Mean of a bias column over the examples that were not skipped."""
        return float(self.rows[column].dropna().mean())


def bias_report(
    store: EmbeddingStore, pop: PopularityTable, examples: Sequence[SequenceExample], recommended: Mapping[int, str]
) -> BiasReport:
    """Semantic and popularity bias of each example's recommended item.

    Args:
        store: Embedding store.
        pop: Training popularity.
        examples: Evaluated examples.
        recommended: Example ID to recommended item.

    Returns:
        Bias report.
    """
    semantic: list[float] = []
    skipped = 0
    for example in examples:
        value = semantic_bias(store, example, recommended[example.example_id])
        if value is None:
            skipped += 1
        semantic.append(float("nan") if value is None else value)
    rows = pd.DataFrame(
        {
            "example_id": [example.example_id for example in examples],
            "semantic_bias": semantic,
            "popularity_bias": [popularity_bias(pop, example, recommended[example.example_id]) for example in examples],
        }
    )
    return BiasReport(rows, skipped)


@final
@dataclass(frozen=True)
class EvaluationReport:
    """Metric tables per ranking mode, the bias report, and the one-row summary."""

    metrics: dict[str, pd.DataFrame]
    bias: BiasReport
    summary: pd.DataFrame


def summary_row(given: pd.DataFrame, bias: BiasReport) -> pd.DataFrame:
    """Helpfulness and harmlessness in one row: HR@1, HR@5, N@5, N@10, Sem. Bias, Pop. Bias."""
    values = [
        metric_value(given, "hr", 1),
        metric_value(given, "hr", 5),
        metric_value(given, "ndcg", 5),
        metric_value(given, "ndcg", 10),
        bias.mean("semantic_bias"),
        bias.mean("popularity_bias"),
    ]
    return pd.DataFrame([values], columns=list(SUMMARY_COLUMNS))


def evaluate_run(
    checkpoint: Checkpoint,
    examples: Sequence[SequenceExample],
    modes: Collection[CandidateSource],
    *,
    store: EmbeddingStore,
    pop: PopularityTable,
    records: Mapping[str, frozenset[str]] | None = None,
    ks: Sequence[int] = DEFAULT_KS,
) -> EvaluationReport:
    """Evaluate a checkpoint under the requested ranking modes.

    The given-candidates top-1 is the recommended item for the bias metrics, so the given mode always runs.

    Args:
        checkpoint: Checkpoint to evaluate.
        examples: Evaluation examples, usually the test split.
        modes: Ranking modes to report.
        store: Embedding store.
        pop: Training popularity.
        records: User records for semantic-hard candidates.
        ks: Cutoffs; 1, 5, and 10 are always included for the summary.

    Returns:
        Evaluation report.
    """
    cutoffs = sorted({*ks, 1, 5, 10})
    model = checkpoint.model
    given = rank_examples(model, examples, "given")
    given_table = hr_ndcg(given, cutoffs)
    metrics: dict[str, pd.DataFrame] = {}
    for mode in CANDIDATE_SOURCES:
        if mode in modes:
            ranked = given if mode == "given" else rank_examples(model, examples, mode, store, records)
            metrics[mode] = given_table if mode == "given" else hr_ndcg(ranked, cutoffs)
    bias = bias_report(store, pop, examples, {result.example_id: result.top1 for result in given})
    return EvaluationReport(metrics, bias, summary_row(given_table, bias))


def write_evaluation(report: EvaluationReport, out_dir: Path) -> None:
    """Write `metrics_<mode>.csv`, `bias.csv`, `bias_summary.csv`, and `summary.txt`.

    Args:
        report: Evaluation report.
        out_dir: Run directory.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    for mode, table in report.metrics.items():
        table.to_csv(out_dir / f"metrics_{mode}.csv", index=False, float_format="%.6f", lineterminator="\n")
    report.bias.rows.to_csv(out_dir / BIAS_FILE, index=False, float_format="%.6f", na_rep="", lineterminator="\n")
    report.bias.summary().to_csv(out_dir / BIAS_SUMMARY_FILE, float_format="%.6f", lineterminator="\n")
    lines = [
        report.summary.to_string(index=False, float_format=lambda value: format_fixed(value, 4)),
        f"semantic bias skipped: {report.bias.skipped}",
    ]
    _ = (out_dir / SUMMARY_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")

