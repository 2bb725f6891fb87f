from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from rosepo_lab.back_end.dataset import PopularityTable
from rosepo_lab.back_end.embeddings import EmbeddingStore
from rosepo_lab.back_end.evaluation import (
    SUMMARY_COLUMNS,
    RankingResult,
    bias_report,
    evaluate_run,
    hr_ndcg,
    metric_value,
    popularity_bias,
    rank,
    rank_examples,
    semantic_bias,
    write_evaluation,
)
from rosepo_lab.back_end.policy import Checkpoint, PolicyModel
from rosepo_lab.models.data import SequenceExample

LETTERS = tuple("abcdefghijkl")


def _result(example_id: int, rank_of_target: int, size: int = 20) -> RankingResult:
    ranked = tuple(f"x{position:02d}" for position in range(size))
    return RankingResult(example_id=example_id, ranked=ranked, rank_of_target=rank_of_target, top1=ranked[0])


def _letter_store() -> EmbeddingStore:
    vectors = np.array([[1.0, 0.0]] * 10 + [[0.0, 1.0], [0.6, 0.8]])
    return EmbeddingStore(LETTERS, vectors)


def _letter_example(example_id: int, target: str) -> SequenceExample:
    return SequenceExample(
        example_id=example_id, user_id="u", history=LETTERS[:10], target=target, split="test", label_timestamp=0
    )


def test_hr_ndcg_matches_brute_force() -> None:
    rng = np.random.default_rng(0)
    results = [_result(example_id, int(rng.integers(1, 21))) for example_id in range(500)]

    table = hr_ndcg(results, ks=(1, 5, 10, 20))

    for k in (1, 5, 10, 20):
        hits = [result.ranked[result.rank_of_target - 1] in result.ranked[:k] for result in results]
        gains = [
            1 / np.log2(position + 2)
            for result in results
            for position, _ in enumerate(result.ranked[:k])
            if position == result.rank_of_target - 1
        ]
        assert metric_value(table, "hr", k) == pytest.approx(np.mean(hits))
        assert metric_value(table, "ndcg", k) == pytest.approx(sum(gains) / len(results))
    assert list(table["metric"]) == ["hr"] * 4 + ["ndcg"] * 4


def test_third_place_spot_values() -> None:
    table = hr_ndcg([_result(0, 3)], ks=(1, 5))

    assert metric_value(table, "hr", 1) == 0.0
    assert metric_value(table, "hr", 5) == 1.0
    assert metric_value(table, "ndcg", 5) == pytest.approx(0.5)
    with pytest.raises(KeyError, match="ndcg@10"):
        _ = metric_value(table, "ndcg", 10)
    with pytest.raises(ValueError, match="zero"):
        _ = hr_ndcg([])


def test_ranking_result_is_consistent() -> None:
    with pytest.raises(ValueError, match="inconsistent"):
        _ = RankingResult(example_id=0, ranked=("a", "b"), rank_of_target=3, top1="a")


def test_ties_break_by_item_id(model: PolicyModel, examples: list[SequenceExample]) -> None:
    flat = model.clone()
    flat.params["item_embeddings"][:] = 0.0
    example = examples[0]

    result = rank(flat, example)

    assert result.ranked == tuple(sorted(example.candidates))
    assert result.top1 == min(example.candidates)
    assert result.rank_of_target == sorted(example.candidates).index(example.target) + 1


def test_ranking_modes(model: PolicyModel, examples: list[SequenceExample], store: EmbeddingStore) -> None:
    records = {example.user_id: frozenset(example.history) | {example.target} for example in examples}

    given = rank_examples(model, examples, "given")
    everything = rank_examples(model, examples, "all_items")
    hard = rank_examples(model, examples, "semantic_hard", store, records)

    assert [len(result.ranked) for result in given] == [20] * len(examples)
    assert all(len(result.ranked) == len(model.item_ids) for result in everything)
    for example, result in zip(examples, hard, strict=True):
        assert example.target in result.ranked
        assert len(result.ranked) == 20
        assert not set(result.ranked) & set(example.history)
    with pytest.raises(ValueError, match="embeddings"):
        _ = rank_examples(model, examples, "semantic_hard")


def test_batch_and_single_rankings_agree(model: PolicyModel, examples: list[SequenceExample]) -> None:
    batch = rank_examples(model, examples, "given")

    assert batch == [rank(model, example) for example in examples]


def test_semantic_bias() -> None:
    store = _letter_store()

    assert semantic_bias(store, _letter_example(0, "k"), "a") is None
    assert semantic_bias(store, _letter_example(1, "l"), "a") == pytest.approx((1.0 - 0.6) / 0.6)
    assert semantic_bias(store, _letter_example(1, "l"), "l") == pytest.approx(0.0)


def test_popularity_bias() -> None:
    pop = PopularityTable({"a": 3, "l": 9})

    value = popularity_bias(pop, _letter_example(0, "k"), "l")

    assert value == pytest.approx(np.log(10) - np.log(4) / 10)


def test_bias_report_skips_singular_targets() -> None:
    examples = [_letter_example(0, "k"), _letter_example(1, "l")]

    report = bias_report(_letter_store(), PopularityTable({}), examples, {0: "a", 1: "a"})
    summary = report.summary()

    assert report.skipped == 1
    assert np.isnan(report.rows["semantic_bias"].iloc[0])
    assert summary.loc["count", "semantic_bias"] == 1
    assert summary.loc["mean", "semantic_bias"] == pytest.approx(report.mean("semantic_bias"))
    assert summary.loc["positive_fraction", "semantic_bias"] == 1.0
    assert summary.loc["count", "popularity_bias"] == 2
    assert summary.loc["mean", "popularity_bias"] == 0.0


def test_evaluate_run_writes_every_table(
    tmp_path: Path,
    model: PolicyModel,
    examples: list[SequenceExample],
    store: EmbeddingStore,
    pop: PopularityTable,
    records: dict[str, frozenset[str]],
) -> None:
    test = [example for example in examples if example.split == "test"]
    checkpoint = Checkpoint.of(model, "sft", seed=0, steps=0)

    report = evaluate_run(
        checkpoint, test, {"given", "semantic_hard", "all_items"}, store=store, pop=pop, records=records
    )
    write_evaluation(report, tmp_path)

    assert list(report.summary.columns) == list(SUMMARY_COLUMNS)
    assert metric_value(report.metrics["given"], "hr", 20) == 1.0
    for mode in ("given", "semantic_hard", "all_items"):
        table = pd.read_csv(tmp_path / f"metrics_{mode}.csv")
        assert list(table["k"]) == [1, 5, 10, 20] * 2
    bias = pd.read_csv(tmp_path / "bias.csv")
    assert list(bias["example_id"]) == [example.example_id for example in test]
    assert (tmp_path / "bias_summary.csv").is_file()
    assert "HR@1" in (tmp_path / "summary.txt").read_text(encoding="utf-8")


def test_evaluate_run_always_ranks_given_candidates(
    model: PolicyModel, examples: list[SequenceExample], store: EmbeddingStore, pop: PopularityTable
) -> None:
    test = [example for example in examples if example.split == "test"]

    report = evaluate_run(Checkpoint.of(model, "po", 0, 0), test, {"all_items"}, store=store, pop=pop)

    assert set(report.metrics) == {"all_items"}
    assert len(report.summary) == 1
