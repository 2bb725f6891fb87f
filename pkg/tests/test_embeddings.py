from pathlib import Path

import numpy as np
import pytest

from rosepo_lab.back_end.embeddings import (
    EmbeddingStore,
    cooccurrence_embeddings,
    history_similarity,
    load_embeddings,
    most_similar_item,
    save_embeddings,
    semantic_hard_candidates,
)
from rosepo_lab.models.data import SequenceExample
from tests.conftest import item_ids


def _example(catalogue: tuple[str, ...], target: str = "i10") -> SequenceExample:
    return SequenceExample(
        example_id=3, user_id="u0", history=tuple(catalogue[:10]), target=target, split="test", label_timestamp=0
    )


def test_store_normalizes() -> None:
    store = EmbeddingStore(["a", "b"], np.array([[3.0, 4.0], [0.0, 2.0]]))

    np.testing.assert_allclose(np.linalg.norm(store.vectors, axis=1), 1.0, atol=1e-12)


def test_store_rejects_zero_vector() -> None:
    with pytest.raises(ValueError, match='"b"'):
        _ = EmbeddingStore(["a", "b"], np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_history_similarity_values() -> None:
    store = EmbeddingStore(
        ["h1", "h2", "same", "orth", "x"],
        np.array(
            [
                [1.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [2.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.8, 0.6, 0.0],
            ]
        ),
    )
    mixed = EmbeddingStore(
        ["p", "q", "x"],
        np.array([[0.8, 0.6, 0.0], [0.4, np.sqrt(1 - 0.16), 0.0], [1.0, 0.0, 0.0]]),
    )

    assert history_similarity(store, ["h1", "h2"], "same") == pytest.approx(1.0)
    assert history_similarity(store, ["h1", "h2"], "orth") == pytest.approx(0.0)
    assert history_similarity(mixed, ["p", "q"], "x") == pytest.approx(0.6)


def test_history_similarity_names_missing_item(store: EmbeddingStore) -> None:
    with pytest.raises(KeyError, match="nope"):
        _ = history_similarity(store, ["i00"], "nope")


def test_history_similarity_is_permutation_and_scale_invariant(catalogue: tuple[str, ...]) -> None:
    raw = np.random.default_rng(1).standard_normal((len(catalogue), 5))
    scaled = raw * np.random.default_rng(2).uniform(0.5, 3.0, size=(len(catalogue), 1))
    store = EmbeddingStore(catalogue, raw)
    rescaled = EmbeddingStore(catalogue, scaled)
    history = list(catalogue[:10])

    value = history_similarity(store, history, "i20")

    assert history_similarity(store, history[::-1], "i20") == pytest.approx(value, abs=1e-12)
    assert history_similarity(rescaled, history, "i20") == pytest.approx(value, abs=1e-12)


def test_most_similar_matches_exhaustive_scan() -> None:
    catalogue = item_ids(50)
    store = EmbeddingStore(catalogue, np.random.default_rng(5).standard_normal((50, 8)))
    history = catalogue[:10]
    excluded = {*history, "i30"}

    best = most_similar_item(store, history, excluded)

    eligible = [item for item in catalogue if item not in excluded]
    assert best == max(eligible, key=lambda item: history_similarity(store, history, item))
    assert best not in excluded


def test_most_similar_breaks_ties_by_item_id() -> None:
    store = EmbeddingStore(["a", "b", "c"], np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]))

    assert most_similar_item(store, ["a"], {"a"}) == "b"


def test_most_similar_with_everything_excluded() -> None:
    store = EmbeddingStore(["a", "b"], np.eye(2))

    with pytest.raises(ValueError, match="excluded"):
        _ = most_similar_item(store, ["a"], {"a", "b"})


def test_semantic_hard_candidates_are_top_similar() -> None:
    catalogue = tuple(item_ids(25))
    store = EmbeddingStore(catalogue, np.random.default_rng(9).standard_normal((25, 4)))
    example = _example(catalogue)

    candidates = semantic_hard_candidates(store, example, 5, rng_seed=0, user_record={"i11"})

    eligible = [item for item in catalogue if item not in {*example.history, "i10", "i11"}]
    top = sorted(eligible, key=lambda item: -history_similarity(store, example.history, item))[:4]
    assert len(candidates) == 5
    assert set(candidates) == {"i10", *top}
    assert semantic_hard_candidates(store, example, 5, rng_seed=0, user_record={"i11"}) == candidates


def test_semantic_hard_candidates_forced_by_size() -> None:
    catalogue = tuple(item_ids(30))
    store = EmbeddingStore(catalogue, np.random.default_rng(4).standard_normal((30, 4)))

    candidates = semantic_hard_candidates(store, _example(catalogue), 20, rng_seed=1)

    assert sorted(candidates) == list(catalogue[10:30])


def test_semantic_hard_candidates_too_few_items() -> None:
    catalogue = tuple(item_ids(20))
    store = EmbeddingStore(catalogue, np.random.default_rng(4).standard_normal((20, 4)))

    with pytest.raises(ValueError, match="Example 3"):
        _ = semantic_hard_candidates(store, _example(catalogue), 20, rng_seed=1)


def test_cooccurrence_fallback_is_deterministic(examples: list[SequenceExample], catalogue: tuple[str, ...]) -> None:
    first = cooccurrence_embeddings(examples, catalogue, dim=4)
    second = cooccurrence_embeddings(examples, catalogue, dim=4)

    assert first.item_ids == catalogue
    assert first.dim == 4
    np.testing.assert_array_equal(first.vectors, second.vectors)
    np.testing.assert_allclose(np.linalg.norm(first.vectors, axis=1), 1.0, atol=1e-9)


def test_embeddings_file(tmp_path: Path, store: EmbeddingStore, catalogue: tuple[str, ...]) -> None:
    path = tmp_path / "embeddings.tsv"
    save_embeddings(store, path)

    loaded = load_embeddings(path, catalogue)

    np.testing.assert_allclose(loaded.vectors, store.vectors, atol=1e-7)
    first_value = path.read_text(encoding="utf-8").splitlines()[0].split("\t")[1].split()[0]
    assert len(first_value.split(".")[1]) == 8


def test_embeddings_file_errors(tmp_path: Path) -> None:
    ragged = tmp_path / "ragged.tsv"
    _ = ragged.write_text("a 1 2\nb 1\n", encoding="utf-8")
    partial = tmp_path / "partial.tsv"
    _ = partial.write_text("a 1 2\n", encoding="utf-8")

    with pytest.raises(ValueError, match="line 2"):
        _ = load_embeddings(ragged, ["a", "b"])
    with pytest.raises(ValueError, match="b"):
        _ = load_embeddings(partial, ["a", "b"])
