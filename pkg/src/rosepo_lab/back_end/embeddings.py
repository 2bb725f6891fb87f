"""Item semantic vectors and history-item similarity.

Vectors are L2-normalized at load so cosine similarity reduces to a dot product. When no embedding file is supplied, a
truncated SVD of the training item-item co-occurrence matrix stands in for text embeddings.
"""

from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import final

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import svds

from rosepo_lab.models.data import SequenceExample
from rosepo_lab.utils.constants import FALLBACK_EMBEDDING_DIM
from rosepo_lab.utils.converters import derive_seed, format_fixed, indices_of

NORM_TOLERANCE = 1e-12


@final
class EmbeddingStore:
    """Unit-normalized vectors for every catalogue item, rows in catalogue order."""

    def __init__(self, item_ids: Sequence[str], vectors: NDArray[np.float64]) -> None:
        """Normalize and store the vectors.

        Args:
            item_ids: Item IDs, sorted, one per row.
            vectors: Raw vectors of shape (items, dim).

        Raises:
            ValueError: If shapes disagree or a vector has zero length.
        """
        if vectors.ndim != 2 or vectors.shape[0] != len(item_ids) or vectors.shape[1] == 0:
            error_message = f"Expected {len(item_ids)} vectors, got an array of shape {vectors.shape}."
            raise ValueError(error_message)
        norms = np.linalg.norm(vectors, axis=1)
        if bool((norms < NORM_TOLERANCE).any()):
            error_message = f'Item "{item_ids[int(np.argmin(norms))]}" has a zero vector.'
            raise ValueError(error_message)
        self.item_ids = tuple(item_ids)
        self.index = {item_id: row for row, item_id in enumerate(self.item_ids)}
        self.vectors = vectors / norms[:, None]
        self.dim = int(vectors.shape[1])

    def rows(self, item_ids: Sequence[str]) -> NDArray[np.intp]:
        """Row indices of items, raising a KeyError that names a missing item."""
        return indices_of(self.index, item_ids)

    def similarities(self, history: Sequence[str]) -> NDArray[np.float64]:
        """Mean cosine similarity of every catalogue item to a history.

        Args:
            history: Item IDs of the history.

        Returns:
            One similarity per catalogue row.
        """
        if not history:
            error_message = "History must contain at least one item."
            raise ValueError(error_message)
        centroid = self.vectors[self.rows(history)].mean(axis=0)
        return self.vectors @ centroid


def history_similarity(store: EmbeddingStore, history: Sequence[str], item: str) -> float:
    """Mean cosine similarity between an item and each history item.

    Args:
        store: Embedding store.
        history: History item IDs.
        item: Item to compare.

    Returns:
        Similarity in [-1, 1].
    """
    if not history:
        error_message = "History must contain at least one item."
        raise ValueError(error_message)
    vector = store.vectors[store.rows([item])[0]]
    return float(np.mean(store.vectors[store.rows(history)] @ vector))


def most_similar_item(store: EmbeddingStore, history: Sequence[str], excluded: Iterable[str]) -> str:
    """Most history-similar catalogue item outside an exclusion set.

    Ties go to the smallest item ID.

    Args:
        store: Embedding store.
        history: History item IDs.
        excluded: Items that may not be returned.

    Raises:
        ValueError: If every item is excluded.

    Returns:
        Item ID of the argmax.
    """
    scores = store.similarities(history)
    excluded_rows = [store.index[item_id] for item_id in excluded if item_id in store.index]
    scores[excluded_rows] = -np.inf
    if not bool(np.isfinite(scores).any()):
        error_message = "Every catalogue item is excluded."
        raise ValueError(error_message)
    return store.item_ids[int(np.argmax(scores))]


def semantic_hard_candidates(
    store: EmbeddingStore, example: SequenceExample, k: int, rng_seed: int, user_record: Iterable[str] = ()
) -> list[str]:
    """Target plus the k - 1 most history-similar non-interacted items, shuffled.

    Args:
        store: Embedding store.
        example: Example whose history drives similarity.
        k: Candidate list size.
        rng_seed: Seed for the shuffle.
        user_record: Items the user interacted with.

    Raises:
        ValueError: If fewer than k - 1 items are unseen.

    Returns:
        Shuffled candidate list of length k.
    """
    excluded = {*user_record, *example.history, example.target}
    scores = store.similarities(example.history)
    eligible = np.array([row for row, item_id in enumerate(store.item_ids) if item_id not in excluded], dtype=np.intp)
    if len(eligible) < k - 1:
        error_message = f"Example {example.example_id}: only {len(eligible)} non-interacted items for {k - 1} slots."
        raise ValueError(error_message)
    # Stable sort on negated scores keeps ID order among ties.
    top = eligible[np.argsort(-scores[eligible], kind="stable")[: k - 1]]
    candidates = [example.target, *(store.item_ids[int(row)] for row in top)]
    order = np.random.default_rng(rng_seed).permutation(len(candidates))
    return [candidates[int(row)] for row in order]


def cooccurrence_embeddings(
    examples: Iterable[SequenceExample], catalogue: Sequence[str], dim: int = FALLBACK_EMBEDDING_DIM
) -> EmbeddingStore:
    """Build fallback embeddings from training-window co-occurrence.

    Items never co-occurring with anything get a fixed random direction derived from their row.

    Args:
        examples: Examples; only the training split is used.
        catalogue: Sorted catalogue.
        dim: Target dimension.

    Returns:
        Embedding store over the catalogue.
    """
    index = {item_id: row for row, item_id in enumerate(catalogue)}
    size = len(catalogue)
    rows: list[int] = []
    columns: list[int] = []
    for example in examples:
        if example.split != "train":
            continue
        window = sorted({index[item_id] for item_id in (*example.history, example.target)})
        for first in window:
            for second in window:
                if first != second:
                    rows.append(first)
                    columns.append(second)
    matrix = coo_matrix((np.ones(len(rows)), (rows, columns)), shape=(size, size), dtype=np.float64).tocsr()
    matrix.sum_duplicates()

    rank = max(1, min(dim, size - 2))
    vectors = np.zeros((size, dim), dtype=np.float64)
    if matrix.nnz > 0 and size > 2:
        # Fixed start vector keeps ARPACK deterministic.
        u, s, _ = svds(matrix, k=rank, v0=np.full(size, 1 / np.sqrt(size)), solver="arpack")
        order = np.argsort(-s, kind="stable")
        vectors[:, :rank] = u[:, order] * np.sqrt(s[order])

    for row in np.flatnonzero(np.linalg.norm(vectors, axis=1) < NORM_TOLERANCE):
        vectors[row] = np.random.default_rng(derive_seed(size, int(row))).standard_normal(dim)
    return EmbeddingStore(catalogue, vectors)


def load_embeddings(path: Path, catalogue: Sequence[str]) -> EmbeddingStore:
    """Read an embedding file: item ID then whitespace-separated floats per line.

    Args:
        path: Embedding file.
        catalogue: Sorted catalogue; every item needs a vector.

    Raises:
        ValueError: On malformed lines, inconsistent width, or missing items.

    Returns:
        Embedding store over the catalogue.
    """
    vectors: dict[str, NDArray[np.float64]] = {}
    dim = 0
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        try:
            vector = np.array([float(value) for value in fields[1:]], dtype=np.float64)
        except ValueError:
            error_message = f"{path}, line {line_number}: non-numeric vector component."
            raise ValueError(error_message) from None
        dim = dim or len(vector)
        if len(vector) != dim or dim == 0:
            error_message = f"{path}, line {line_number}: expected {dim} components, got {len(vector)}."
            raise ValueError(error_message)
        vectors[fields[0]] = vector
    missing = [item_id for item_id in catalogue if item_id not in vectors]
    if missing:
        error_message = f"{path}: no vector for item(s) {', '.join(missing[:5])}{' ...' if len(missing) > 5 else ''}."
        raise ValueError(error_message)
    return EmbeddingStore(catalogue, np.stack([vectors[item_id] for item_id in catalogue]))


def save_embeddings(store: EmbeddingStore, path: Path) -> None:
    """Write normalized vectors in the embedding-file format."""
    lines = (
        f"{item_id}\t{' '.join(format_fixed(value, 8) for value in vector)}\n"
        for item_id, vector in zip(store.item_ids, store.vectors, strict=True)
    )
    _ = path.write_text("".join(lines), encoding="utf-8")
