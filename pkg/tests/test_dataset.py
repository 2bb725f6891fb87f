from collections import Counter
from math import log
from pathlib import Path

import numpy as np
import pytest

from rosepo_lab.back_end.dataset import (
    Dataset,
    PopularityTable,
    dataset_statistics,
    ingest,
    load_examples,
    load_popularity,
    sample_candidates,
    save_examples,
    save_popularity,
    window_and_split,
)
from rosepo_lab.models.data import Interaction, SequenceExample
from tests.conftest import N_USERS, PER_USER, item_ids, write_tsv

HEADER = ["user_id", "item_id", "rating", "timestamp"]


def _dataset(lengths: dict[str, int], n_items: int = 60) -> Dataset:
    catalogue = item_ids(n_items)
    interactions = [
        Interaction(user_id=user_id, item_id=catalogue[step], rating=5, timestamp=step * 10 + index)
        for index, (user_id, length) in enumerate(lengths.items())
        for step in range(length)
    ]
    return Dataset(interactions, {item: item for item in catalogue})


def test_ingest_drops_low_ratings(tmp_path: Path, items_file: Path) -> None:
    rows = [("u0", "i00", 5, 1), ("u0", "i01", 2, 2), ("u0", "i02", 3, 3), ("u0", "i03", 4, 4), ("u0", "i04", 3, 5)]
    interactions = write_tsv(tmp_path / "five.tsv", HEADER, rows)

    dataset = ingest(interactions, items_file, min_rating=3)

    assert len(dataset.interactions) == 4
    assert "i01" not in dataset.record("u0")


def test_ingest_empty_file(tmp_path: Path, items_file: Path) -> None:
    interactions = tmp_path / "empty.tsv"
    _ = interactions.write_text("", encoding="utf-8")

    dataset = ingest(interactions, items_file, min_rating=0)

    assert dataset.interactions == ()
    assert window_and_split(dataset) == []


def test_ingest_orders_ties_by_file_order(tmp_path: Path, items_file: Path) -> None:
    rows = [("u0", "i03", 5, 7), ("u0", "i01", 5, 7), ("u0", "i02", 5, 1)]
    dataset = ingest(write_tsv(tmp_path / "ties.tsv", HEADER, rows), items_file, min_rating=0)

    assert [event.item_id for event in dataset.by_user["u0"]] == ["i02", "i03", "i01"]


def test_ingest_reports_malformed_line(tmp_path: Path, items_file: Path) -> None:
    rows = [("u0", "i00", 5, 1), ("u0", "i01", "five", 2)]
    interactions = write_tsv(tmp_path / "bad.tsv", HEADER, rows)

    with pytest.raises(ValueError, match="line 3"):
        _ = ingest(interactions, items_file, min_rating=0)


def test_ingest_counts_blank_lines_in_line_numbers(tmp_path: Path, items_file: Path) -> None:
    interactions = tmp_path / "blank.tsv"
    lines = ["\t".join(HEADER), "u0\ti00\t5\t1", "", "u0\ti01\t4\t2", "u0\ti02\tfive\t3"]
    _ = interactions.write_text("\n".join(lines) + "\n", encoding="utf-8")

    with pytest.raises(ValueError, match="line 5"):
        _ = ingest(interactions, items_file, min_rating=0)


def test_ingest_skips_blank_lines(tmp_path: Path, items_file: Path) -> None:
    interactions = tmp_path / "blank.tsv"
    lines = ["\t".join(HEADER), "u0\ti00\t5\t1", "", "u0\ti01\t4\t2"]
    _ = interactions.write_text("\n".join(lines) + "\n", encoding="utf-8")

    dataset = ingest(interactions, items_file, min_rating=0)

    assert [event.item_id for event in dataset.by_user["u0"]] == ["i00", "i01"]


def test_ingest_rejects_unknown_item(tmp_path: Path, items_file: Path) -> None:
    interactions = write_tsv(tmp_path / "unknown.tsv", HEADER, [("u0", "zz", 5, 1)])

    with pytest.raises(KeyError, match="zz"):
        _ = ingest(interactions, items_file, min_rating=0)


def test_window_counts() -> None:
    examples = window_and_split(_dataset({"a": 11, "b": 15, "c": 10}))
    per_user = Counter(example.user_id for example in examples)

    assert per_user == {"a": 1, "b": 5}


def test_window_drops_users_below_minimum() -> None:
    examples = window_and_split(_dataset({"a": 12, "b": 25}), min_user_interactions=20)

    assert {example.user_id for example in examples} == {"b"}
    assert len(examples) == 15


def test_window_history_and_target() -> None:
    example = window_and_split(_dataset({"a": 11}))[0]

    assert example.history == tuple(item_ids(10))
    assert example.target == "i10"


def test_split_ratio_and_no_leakage() -> None:
    # 10 users with 20 interactions each give 100 windows with distinct label timestamps.
    examples = window_and_split(_dataset({f"u{index}": 20 for index in range(10)}))
    splits = Counter(example.split for example in examples)

    assert len(examples) == 100
    assert splits == {"train": 80, "valid": 10, "test": 10}
    train_max = max(example.label_timestamp for example in examples if example.split == "train")
    valid = [example.label_timestamp for example in examples if example.split == "valid"]
    test_min = min(example.label_timestamp for example in examples if example.split == "test")
    assert train_max < min(valid)
    assert max(valid) < test_min
    assert [example.example_id for example in examples] == list(range(100))


def test_split_ties_go_to_earlier_split() -> None:
    # Every window shares one label timestamp.
    interactions = [
        Interaction(user_id=f"u{user}", item_id=f"i{step:02d}", rating=5, timestamp=step)
        for user in range(10)
        for step in range(11)
    ]
    examples = window_and_split(Dataset(interactions, {item: item for item in item_ids(20)}))

    assert {example.split for example in examples} == {"train"}


def test_fixture_windows_and_candidates(examples: list[SequenceExample], records: dict[str, frozenset[str]]) -> None:
    assert len(examples) == N_USERS * (PER_USER - 10)
    assert Counter(example.split for example in examples) == {"train": 16, "valid": 2, "test": 2}
    for example in examples:
        assert len(example.candidates) == 20
        assert example.target in example.candidates
        assert set(example.candidates) & records[example.user_id] == {example.target}


def test_candidates_forced_set() -> None:
    catalogue = item_ids(21)
    example = SequenceExample(
        example_id=0, user_id="u", history=("i00",) * 10, target="i20", split="train", label_timestamp=0
    )

    completed = sample_candidates(example, {"i00", "i20"}, catalogue, rng_seed=3)

    assert sorted(completed.candidates) == catalogue[1:]


def test_candidates_deterministic_and_seed_dependent(examples: list[SequenceExample]) -> None:
    catalogue = item_ids()
    bare = examples[0].model_copy(update={"candidates": ()})
    record = {*bare.history, bare.target}

    first = sample_candidates(bare, record, catalogue, rng_seed=11)
    second = sample_candidates(bare, record, catalogue, rng_seed=11)
    other = sample_candidates(bare, record, catalogue, rng_seed=12)

    assert first == second
    assert first.candidates != other.candidates


def test_candidates_too_small_catalogue() -> None:
    catalogue = item_ids(25)
    example = SequenceExample(
        example_id=4, user_id="u", history=tuple(catalogue[:10]), target="i10", split="train", label_timestamp=0
    )

    with pytest.raises(ValueError, match="Example 4"):
        _ = sample_candidates(example, catalogue[:11], catalogue, rng_seed=0)


def test_candidates_uniform_frequency() -> None:
    catalogue = item_ids(60)
    example = SequenceExample(
        example_id=0, user_id="u", history=tuple(catalogue[:10]), target="i10", split="train", label_timestamp=0
    )
    record = set(catalogue[:11])
    draws = 2000
    counts = Counter(
        item
        for seed in range(draws)
        for item in sample_candidates(example, record, catalogue, seed).candidates
        if item != "i10"
    )

    eligible = len(catalogue) - len(record)
    expected = draws * 19 / eligible
    sigma = np.sqrt(draws * (19 / eligible) * (1 - 19 / eligible))
    assert set(counts) == set(catalogue[11:])
    assert all(abs(count - expected) < 4 * sigma for count in counts.values())


def test_popularity_counts_train_interactions(pop: PopularityTable) -> None:
    # i05 is step 5 of u0 and step 0 of u1; both fall before the last training label.
    assert pop.count("i05") == 2
    assert pop.log_popularity("i05") == pytest.approx(log(3))
    assert pop.count("missing") == 0
    assert pop.log_popularity("missing") == 0.0


def test_popularity_log_of_counts() -> None:
    table = PopularityTable({"a": 99, "b": 7, "c": 7})

    assert table.log_popularity("a") == pytest.approx(4.6052, abs=1e-4)
    assert table.log_popularity("b") == table.log_popularity("c")


def test_statistics(dataset: Dataset, examples: list[SequenceExample]) -> None:
    frame = dataset_statistics(dataset, examples)
    statistics = dict(zip(frame["statistic"], frame["value"], strict=True))

    assert statistics["examples"] == 20
    assert statistics["sequences"] == N_USERS
    assert statistics["interactions"] == N_USERS * PER_USER
    assert statistics["test"] == 2


def test_examples_and_popularity_persist(tmp_path: Path, examples: list[SequenceExample], pop: PopularityTable) -> None:
    save_examples(examples, tmp_path / "examples.jsonl")
    save_popularity(pop, tmp_path / "popularity.tsv")

    assert load_examples(tmp_path / "examples.jsonl") == examples
    assert load_popularity(tmp_path / "popularity.tsv").counts == pop.counts
