"""Interaction ingestion and the sequence-preparation protocol.

Responsible for filtering raw interaction logs, cutting them into fixed windows, splitting the windows by time, drawing
candidate sets, and computing item popularity from the training split.

Usage:
    ```python
    dataset = ingest(interactions_path, items_path, min_rating=3)
    examples = window_and_split(dataset)
    examples = [sample_candidates(e, dataset.record(e.user_id), dataset.catalogue, seed) for e in examples]
    table = popularity(dataset, examples)
    ```
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from math import floor, log1p
from pathlib import Path
from typing import final

import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError, ParserError

from rosepo_lab.models.data import Interaction, SequenceExample, Split, UserRecord
from rosepo_lab.utils.constants import (
    CANDIDATE_COUNT,
    HISTORY_LENGTH,
    TRAIN_QUANTILE,
    VALID_QUANTILE,
    WINDOW_LENGTH,
)
from rosepo_lab.utils.converters import derive_seed, format_fixed

INTERACTION_COLUMNS = ["user_id", "item_id", "rating", "timestamp"]
ITEM_COLUMNS = ["item_id", "title"]


@final
class Dataset:
    """Filtered interactions over an item catalogue.

    The catalogue is sorted by item ID so catalogue order doubles as the tie-break order everywhere.
    """

    def __init__(self, interactions: Sequence[Interaction], titles: dict[str, str]) -> None:
        """Group interactions per user in chronological order.

        Args:
            interactions: Interactions in file order.
            titles: Item ID to title for the whole catalogue.
        """
        self.titles = titles
        self.catalogue: tuple[str, ...] = tuple(sorted(titles))
        self.index = {item_id: row for row, item_id in enumerate(self.catalogue)}

        # Stable sort keeps file order among equal timestamps.
        by_user: dict[str, list[Interaction]] = {}
        for interaction in interactions:
            by_user.setdefault(interaction.user_id, []).append(interaction)
        self.by_user = {
            user_id: tuple(sorted(events, key=lambda event: event.timestamp)) for user_id, events in by_user.items()
        }
        self._records = {
            user_id: frozenset(event.item_id for event in events) for user_id, events in self.by_user.items()
        }

    @property
    def interactions(self) -> tuple[Interaction, ...]:
        """All interactions grouped by user, each user chronological."""
        return tuple(event for user_id in sorted(self.by_user) for event in self.by_user[user_id])

    def record(self, user_id: str) -> frozenset[str]:
        """Every item a user interacted with.

        Args:
            user_id: User ID.

        Returns:
            Set of item IDs, empty for unknown users.
        """
        return self._records.get(user_id, frozenset())

    def records(self) -> list[UserRecord]:
        """Every user's interaction record, sorted by user ID.

        Returns:
            List of user records.
        """
        return [
            UserRecord(user_id=user_id, items=tuple(sorted(items)))
            for user_id, items in sorted(self._records.items())
        ]


@dataclass(frozen=True)
class PopularityTable:
    """Training-split interaction counts and their logarithmic popularity."""

    counts: dict[str, int]
    log_pop: dict[str, float] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "log_pop", {item_id: log1p(count) for item_id, count in self.counts.items()})

    def count(self, item_id: str) -> int:
        """Interaction count of an item, zero when unseen."""
        return self.counts.get(item_id, 0)

    def log_popularity(self, item_id: str) -> float:
        """ln(1 + count) of an item, zero when unseen."""
        return self.log_pop.get(item_id, 0.0)


def _read_tsv(path: Path, columns: list[str]) -> pd.DataFrame:
    """Read a headed TSV file as strings, indexed by 1-based file line and without blank lines.

    Args:
        path: File to read.
        columns: Required columns.

    Raises:
        ValueError: If the file does not parse or lacks a column.

    Returns:
        Data frame of raw strings; empty when the file is empty.
    """
    try:
        frame = pd.read_csv(
            path, sep="\t", dtype=str, keep_default_na=False, on_bad_lines="error", quoting=3, skip_blank_lines=False
        )
    except EmptyDataError:
        return pd.DataFrame({column: pd.Series(dtype=str) for column in columns})
    except ParserError as e:
        error_message = f"{path}: {e}"
        raise ValueError(error_message) from None
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        error_message = f"{path}: missing column(s) {', '.join(missing)} in header."
        raise ValueError(error_message)
    # Row 0 sits on line 2, below the header.
    frame.index = frame.index + 2
    return frame.loc[~frame.fillna("").eq("").all(axis=1)]


def _first_line(mask: pd.Series) -> int:
    """File line of the first flagged row."""
    return int(mask.index[np.flatnonzero(mask.to_numpy())[0]])


def _integer_column(frame: pd.DataFrame, column: str, path: Path) -> pd.Series:
    """Convert a column of strings to integers, failing on the first bad row.

    Args:
        frame: Raw data frame.
        column: Column to convert.
        path: Source file, for the error message.

    Raises:
        ValueError: Naming the 1-based file line of the first malformed value.

    Returns:
        Integer series.
    """
    values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    bad = values.isna() | (values != values.round())
    if bool(bad.any()):
        line = _first_line(bad)
        error_message = f"{path}, line {line}: malformed {column} {frame[column].loc[line]!r}."
        raise ValueError(error_message)
    return values.astype(np.int64)


def ingest(interactions_file: Path, items_file: Path, min_rating: int) -> Dataset:
    """Read and filter an interaction log.

    Args:
        interactions_file: TSV with columns `user_id item_id rating timestamp` and a header row.
        items_file: TSV with columns `item_id title` and a header row.
        min_rating: Interactions rated below this are dropped.

    Raises:
        ValueError: On a malformed row (with its line number) or a duplicate event.
        KeyError: If an interaction references an item missing from the items file.

    Returns:
        Dataset of the retained interactions.
    """
    items = _read_tsv(items_file, ITEM_COLUMNS)
    duplicated_items = items["item_id"].duplicated()
    if bool(duplicated_items.any()):
        line = _first_line(duplicated_items)
        error_message = f"{items_file}, line {line}: duplicate item {items['item_id'].loc[line]!r}."
        raise ValueError(error_message)
    titles = dict(zip(items["item_id"], items["title"], strict=True))

    frame = _read_tsv(interactions_file, INTERACTION_COLUMNS)
    ratings = _integer_column(frame, "rating", interactions_file)
    timestamps = _integer_column(frame, "timestamp", interactions_file)
    negative = timestamps < 0
    if bool(negative.any()):
        line = _first_line(negative)
        error_message = f"{interactions_file}, line {line}: negative timestamp {timestamps.loc[line]}."
        raise ValueError(error_message)

    unknown = ~frame["item_id"].isin(titles)
    if bool(unknown.any()):
        line = _first_line(unknown)
        error_message = f"{interactions_file}, line {line}: unknown item {frame['item_id'].loc[line]!r}."
        raise KeyError(error_message)

    keys = pd.DataFrame({"user_id": frame["user_id"], "item_id": frame["item_id"], "timestamp": timestamps})
    duplicated = keys.duplicated()
    if bool(duplicated.any()):
        line = _first_line(duplicated)
        error_message = f"{interactions_file}, line {line}: duplicate (user, item, timestamp) event."
        raise ValueError(error_message)

    kept = (ratings >= min_rating).to_numpy()
    interactions = [
        Interaction(user_id=user_id, item_id=item_id, rating=int(rating), timestamp=int(timestamp))
        for user_id, item_id, rating, timestamp in zip(
            frame["user_id"].to_numpy()[kept],
            frame["item_id"].to_numpy()[kept],
            ratings.to_numpy()[kept],
            timestamps.to_numpy()[kept],
            strict=True,
        )
    ]
    return Dataset(interactions, titles)


def _split_bounds(label_timestamps: Sequence[int]) -> tuple[float, float]:
    """Compute the train and validation label-timestamp cutoffs.

    Windows sharing a boundary timestamp go to the earlier split.

    Args:
        label_timestamps: Label timestamps in ascending order.

    Returns:
        Inclusive upper bounds for train and validation.
    """
    count = len(label_timestamps)
    train_rank = floor(TRAIN_QUANTILE * count)
    valid_rank = floor(VALID_QUANTILE * count)
    train_bound = float(label_timestamps[train_rank - 1]) if train_rank > 0 else float("-inf")
    valid_bound = float(label_timestamps[valid_rank - 1]) if valid_rank > 0 else float("-inf")
    return train_bound, max(train_bound, valid_bound)


def window_and_split(dataset: Dataset, min_user_interactions: int = WINDOW_LENGTH) -> list[SequenceExample]:
    """Cut every user's chronology into length-11 windows and split them 8:1:1 by label time.

    Args:
        dataset: Filtered dataset.
        min_user_interactions: Users with fewer filtered interactions contribute nothing.

    Returns:
        Examples ordered by label timestamp with IDs assigned in that order. Candidates are left empty.
    """
    windows: list[tuple[int, str, int, tuple[str, ...], str]] = []
    for user_id in sorted(dataset.by_user):
        events = dataset.by_user[user_id]
        if len(events) < max(min_user_interactions, WINDOW_LENGTH):
            continue
        for start in range(len(events) - HISTORY_LENGTH):
            window = events[start : start + WINDOW_LENGTH]
            history = tuple(event.item_id for event in window[:HISTORY_LENGTH])
            target = window[HISTORY_LENGTH].item_id
            if target in history:
                continue
            windows.append((window[HISTORY_LENGTH].timestamp, user_id, start, history, target))

    windows.sort(key=lambda window: (window[0], window[1], window[2]))
    train_bound, valid_bound = _split_bounds([window[0] for window in windows])

    def split_of(label_timestamp: int) -> Split:
        if label_timestamp <= train_bound:
            return "train"
        if label_timestamp <= valid_bound:
            return "valid"
        return "test"

    return [
        SequenceExample(
            example_id=example_id,
            user_id=user_id,
            history=history,
            target=target,
            split=split_of(label_timestamp),
            label_timestamp=label_timestamp,
        )
        for example_id, (label_timestamp, user_id, _, history, target) in enumerate(windows)
    ]


def sample_candidates(
    example: SequenceExample, user_record: Iterable[str], catalogue: Sequence[str], rng_seed: int
) -> SequenceExample:
    """Draw 19 non-interacted distractors and shuffle them with the target.

    Args:
        example: Example to complete.
        user_record: Every item the user interacted with.
        catalogue: Every item ID, sorted.
        rng_seed: Seed for this example's draw.

    Raises:
        ValueError: If fewer than 19 catalogue items are unseen by the user.

    Returns:
        Copy of the example with 20 candidates.
    """
    record = set(user_record) | {example.target}
    eligible = [item_id for item_id in catalogue if item_id not in record]
    distractor_count = CANDIDATE_COUNT - 1
    if len(eligible) < distractor_count:
        error_message = (
            f"Example {example.example_id}: catalogue leaves only {len(eligible)} non-interacted items,"
            f" {distractor_count} are needed."
        )
        raise ValueError(error_message)
    rng = np.random.default_rng(rng_seed)
    picked = rng.choice(len(eligible), size=distractor_count, replace=False)
    candidates = [example.target, *(eligible[int(row)] for row in picked)]
    order = rng.permutation(CANDIDATE_COUNT)
    return example.model_copy(update={"candidates": tuple(candidates[int(row)] for row in order)})


def attach_candidates(dataset: Dataset, examples: Sequence[SequenceExample], seed: int) -> list[SequenceExample]:
    """Draw candidate sets for every example with per-example derived seeds.

    Args:
        dataset: Dataset supplying catalogue and user records.
        examples: Windowed examples.
        seed: Run seed.

    Returns:
        Examples with candidates, in the same order.
    """
    return [
        sample_candidates(
            example, dataset.record(example.user_id), dataset.catalogue, derive_seed(seed, example.example_id)
        )
        for example in examples
    ]


def popularity(dataset: Dataset, examples: Sequence[SequenceExample]) -> PopularityTable:
    """Count training-split interactions per item.

    The training split covers every interaction up to the last training label timestamp.

    Args:
        dataset: Filtered dataset.
        examples: Split examples locating the training cutoff.

    Returns:
        Popularity table over the whole catalogue.
    """
    train_labels = [example.label_timestamp for example in examples if example.split == "train"]
    counts = dict.fromkeys(dataset.catalogue, 0)
    if train_labels:
        cutoff = max(train_labels)
        for events in dataset.by_user.values():
            for event in events:
                if event.timestamp <= cutoff:
                    counts[event.item_id] += 1
    return PopularityTable(counts)


def dataset_statistics(dataset: Dataset, examples: Sequence[SequenceExample]) -> pd.DataFrame:
    """Summarize a prepared dataset.

    Args:
        dataset: Filtered dataset.
        examples: Split examples.

    Returns:
        Two-column frame of statistic name and value.
    """
    splits = pd.Series([example.split for example in examples], dtype=str).value_counts()
    rows = {
        "sequences": len({example.user_id for example in examples}),
        "items": len(dataset.catalogue),
        "interactions": sum(len(events) for events in dataset.by_user.values()),
        "users": len(dataset.by_user),
        "examples": len(examples),
        "train": int(splits.get("train", 0)),
        "valid": int(splits.get("valid", 0)),
        "test": int(splits.get("test", 0)),
    }
    return pd.DataFrame({"statistic": list(rows), "value": list(rows.values())})


# Persistence.


def save_examples(examples: Iterable[SequenceExample], path: Path) -> None:
    """Write examples as newline-delimited JSON records."""
    _ = path.write_text("".join(f"{example.to_json_string()}\n" for example in examples), encoding="utf-8")


def load_examples(path: Path) -> list[SequenceExample]:
    """Read examples written by `save_examples`."""
    return [SequenceExample.model_validate_json(line) for line in path.read_text(encoding="utf-8").splitlines() if line]


def save_records(records: Iterable[UserRecord], path: Path) -> None:
    """Write user records as newline-delimited JSON records."""
    _ = path.write_text("".join(f"{record.to_json_string()}\n" for record in records), encoding="utf-8")


def load_records(path: Path) -> dict[str, frozenset[str]]:
    """Read user records written by `save_records`.

    Returns:
        Mapping of user ID to interacted items.
    """
    records = (UserRecord.model_validate_json(line) for line in path.read_text(encoding="utf-8").splitlines() if line)
    return {record.user_id: frozenset(record.items) for record in records}


def save_items(dataset: Dataset, path: Path) -> None:
    """Write the catalogue in the items-file format."""
    frame = pd.DataFrame({"item_id": list(dataset.catalogue), "title": [dataset.titles[i] for i in dataset.catalogue]})
    frame.to_csv(path, sep="\t", index=False, lineterminator="\n")


def load_catalogue(path: Path) -> tuple[str, ...]:
    """Read the sorted catalogue from an items file."""
    return tuple(sorted(_read_tsv(path, ITEM_COLUMNS)["item_id"]))


def save_popularity(table: PopularityTable, path: Path) -> None:
    """Write a popularity table as `item_id count log_pop` TSV."""
    items = sorted(table.counts)
    frame = pd.DataFrame(
        {
            "item_id": items,
            "count": [table.counts[item_id] for item_id in items],
            "log_pop": [format_fixed(table.log_pop[item_id]) for item_id in items],
        }
    )
    frame.to_csv(path, sep="\t", index=False, lineterminator="\n")


def load_popularity(path: Path) -> PopularityTable:
    """Read a popularity table; log popularity is recomputed from the counts."""
    frame = _read_tsv(path, ["item_id", "count"])
    return PopularityTable(dict(zip(frame["item_id"], _integer_column(frame, "count", path).tolist(), strict=True)))
