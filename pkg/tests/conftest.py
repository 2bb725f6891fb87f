"""Shared fixtures: a tiny interaction log on disk, its prepared examples, and small models."""

from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pytest

from rosepo_lab.back_end.dataset import (
    Dataset,
    PopularityTable,
    attach_candidates,
    ingest,
    popularity,
    window_and_split,
)
from rosepo_lab.back_end.embeddings import EmbeddingStore
from rosepo_lab.back_end.policy import PolicyModel
from rosepo_lab.models.data import SequenceExample
from rosepo_lab.utils.console import Console

N_ITEMS = 40
N_USERS = 4
PER_USER = 15


def write_tsv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> Path:
    lines = ["\t".join(header), *("\t".join(str(value) for value in row) for row in rows)]
    _ = path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def item_ids(count: int = N_ITEMS) -> list[str]:
    return [f"i{index:02d}" for index in range(count)]


@pytest.fixture
def catalogue() -> tuple[str, ...]:
    return tuple(item_ids())


@pytest.fixture
def items_file(tmp_path: Path) -> Path:
    return write_tsv(tmp_path / "items.tsv", ["item_id", "title"], [(item, f"Title {item}") for item in item_ids()])


@pytest.fixture
def interactions_file(tmp_path: Path) -> Path:
    # User k walks items 5k, 5k+1, ... (mod 40); timestamps interleave users so every label time is distinct.
    rows = [
        (f"u{user}", f"i{(5 * user + step) % N_ITEMS:02d}", 4, step * N_USERS + user)
        for user in range(N_USERS)
        for step in range(PER_USER)
    ]
    return write_tsv(tmp_path / "interactions.tsv", ["user_id", "item_id", "rating", "timestamp"], rows)


@pytest.fixture
def dataset(interactions_file: Path, items_file: Path) -> Dataset:
    return ingest(interactions_file, items_file, min_rating=0)


@pytest.fixture
def examples(dataset: Dataset) -> list[SequenceExample]:
    return attach_candidates(dataset, window_and_split(dataset), seed=0)


@pytest.fixture
def records(dataset: Dataset) -> dict[str, frozenset[str]]:
    return {user_id: dataset.record(user_id) for user_id in dataset.by_user}


@pytest.fixture
def pop(dataset: Dataset, examples: list[SequenceExample]) -> PopularityTable:
    return popularity(dataset, examples)


@pytest.fixture
def store(catalogue: tuple[str, ...]) -> EmbeddingStore:
    return EmbeddingStore(catalogue, np.random.default_rng(7).standard_normal((len(catalogue), 6)))


@pytest.fixture
def model(catalogue: tuple[str, ...]) -> PolicyModel:
    return PolicyModel.initialize(catalogue, width=8, seed=0)


@pytest.fixture
def console() -> Console:
    return Console(enable_debug=False, quiet=True)
