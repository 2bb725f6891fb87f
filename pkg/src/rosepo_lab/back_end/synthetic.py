"""Planted-structure datasets and controlled label noise.

Users walk a random cycle over the catalogue, following the cycle with probability rho per step and otherwise
jumping to a popularity-weighted unvisited item. Items fall into semantic clusters whose members share nearly the
same embedding.

Usage:
    ```python
    data = generate(SyntheticSpec(n_users=5000, n_items=500, rho=0.8, zipf=1.2))
    write_synthetic(data, out_dir)
    noisy, mask = inject_flips(pairs, flip_prob=0.3, seed=0, perfect_epsilon=True)
    ```
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from rosepo_lab.back_end.embeddings import EmbeddingStore, save_embeddings
from rosepo_lab.models.config import SyntheticSpec
from rosepo_lab.models.data import PreferencePair
from rosepo_lab.utils.constants import FALLBACK_EMBEDDING_DIM
from rosepo_lab.utils.converters import derive_seed

INTERACTIONS_FILE = "interactions.tsv"
ITEMS_FILE = "items.tsv"
EMBEDDINGS_FILE = "embeddings.tsv"
GROUND_TRUTH_FILE = "ground_truth.txt"
FLIP_MASK_FILE = "flip_mask.csv"

CLUSTER_SPREAD = 0.01
RATING = 5
FLIP_SALT = 0x666C70


@dataclass(frozen=True)
class SyntheticData:
    """Generated interactions, catalogue, embeddings, and the planted kernel.

    Attributes:
        interactions: Frame with `user_id`, `item_id`, `rating`, `timestamp`.
        items: Frame with `item_id`, `title`.
        vectors: Embedding per item, rows in item order.
        kernel: Item to its planted successor.
        clusters: Cluster index per item.
    """

    interactions: pd.DataFrame
    items: pd.DataFrame
    vectors: NDArray[np.float64]
    kernel: dict[str, str]
    clusters: NDArray[np.intp]


def _ids(prefix: str, count: int) -> list[str]:
    # Zero padding keeps lexical order equal to numeric order.
    width = len(str(count - 1))
    return [f"{prefix}{index:0{width}d}" for index in range(count)]


def zipf_weights(n_items: int, exponent: float, rng: np.random.Generator) -> NDArray[np.float64]:
    """Normalized (rank)^-s weights over randomly ranked items."""
    ranks = rng.permutation(n_items)
    weights = (ranks + 1.0) ** -exponent
    return weights / weights.sum()


def generate(spec: SyntheticSpec) -> SyntheticData:
    """Generate a planted-structure dataset.

    Args:
        spec: Dataset description.

    Returns:
        Generated data.
    """
    rng = np.random.default_rng(spec.seed)
    n_items = spec.n_items
    items = _ids("i", n_items)
    users = _ids("u", spec.n_users)

    cycle = rng.permutation(n_items)
    successor = np.empty(n_items, dtype=np.intp)
    successor[cycle] = np.roll(cycle, -1)
    weights = zipf_weights(n_items, spec.zipf, rng)

    clusters = (np.arange(n_items) % spec.clusters).astype(np.intp)
    centers = rng.standard_normal((spec.clusters, FALLBACK_EMBEDDING_DIM))
    vectors = centers[clusters] + CLUSTER_SPREAD * rng.standard_normal((n_items, FALLBACK_EMBEDDING_DIM))

    rows: list[tuple[str, str, int, int]] = []
    for user_index, user_id in enumerate(users):
        offset = int(rng.integers(spec.sequence_length))
        visited = np.zeros(n_items, dtype=bool)
        current = int(rng.choice(n_items, p=weights))
        for step in range(spec.sequence_length):
            if step:
                follow = rng.random() < spec.rho
                planted = int(successor[current])
                if follow and not visited[planted]:
                    current = planted
                else:
                    open_weights = np.where(visited, 0.0, weights)
                    current = int(rng.choice(n_items, p=open_weights / open_weights.sum()))
            visited[current] = True
            rows.append((user_id, items[current], RATING, (offset + step) * spec.n_users + user_index))

    return SyntheticData(
        interactions=pd.DataFrame(rows, columns=["user_id", "item_id", "rating", "timestamp"]),
        items=pd.DataFrame(
            {"item_id": items, "title": [f"Item {index} (cluster {c})" for index, c in enumerate(clusters)]}
        ),
        vectors=vectors,
        kernel={items[index]: items[int(successor[index])] for index in range(n_items)},
        clusters=clusters,
    )


def write_synthetic(data: SyntheticData, out_dir: Path) -> None:
    """Write interactions, items, embeddings, and the ground-truth kernel.

    Args:
        data: Generated data.
        out_dir: Output directory.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    data.interactions.to_csv(out_dir / INTERACTIONS_FILE, sep="\t", index=False, lineterminator="\n")
    data.items.to_csv(out_dir / ITEMS_FILE, sep="\t", index=False, lineterminator="\n")
    save_embeddings(EmbeddingStore(list(data.items["item_id"]), data.vectors), out_dir / EMBEDDINGS_FILE)
    lines = (f"{item_id}\t{data.kernel[item_id]}\n" for item_id in sorted(data.kernel))
    _ = (out_dir / GROUND_TRUTH_FILE).write_text("".join(lines), encoding="utf-8")


def load_ground_truth(path: Path) -> dict[str, str]:
    """Read the kernel rows written by `write_synthetic`."""
    kernel: dict[str, str] = {}
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        fields = line.split("\t")
        if len(fields) != 2:
            error_message = f"{path}, line {line_number}: expected `item<TAB>next`."
            raise ValueError(error_message)
        kernel[fields[0]] = fields[1]
    return kernel


def apply_flip_mask(pairs: Sequence[PreferencePair], mask: Sequence[bool] | NDArray[np.bool_]) -> list[PreferencePair]:
    """Swap chosen and rejected wherever the mask is set. Applying the same mask twice restores the input.

    Args:
        pairs: Preference pairs.
        mask: One flag per pair.

    Returns:
        Pairs with the masked ones swapped.
    """
    if len(mask) != len(pairs):
        error_message = f"Flip mask has {len(mask)} entries for {len(pairs)} pairs."
        raise ValueError(error_message)
    return [
        pair.model_copy(update={"chosen": pair.rejected, "rejected": pair.chosen}) if flip else pair
        for pair, flip in zip(pairs, mask, strict=True)
    ]


def inject_flips(
    pairs: Sequence[PreferencePair], flip_prob: float, seed: int, *, perfect_epsilon: bool = False
) -> tuple[list[PreferencePair], NDArray[np.bool_]]:
    """Swap each pair independently with a fixed probability.

    Args:
        pairs: Clean preference pairs.
        flip_prob: Flip probability in [0, 0.5).
        seed: Seed for the mask.
        perfect_epsilon: Write flip_prob into every pair's flip-rate, as a perfect oracle would.

    Raises:
        ValueError: If flip_prob is outside [0, 0.5).

    Returns:
        Corrupted pairs and the flip mask.
    """
    if not 0 <= flip_prob < 0.5:
        error_message = f"Flip probability must lie in [0, 0.5), got {flip_prob}."
        raise ValueError(error_message)
    mask = np.random.default_rng(derive_seed(seed, FLIP_SALT)).random(len(pairs)) < flip_prob
    flipped = apply_flip_mask(pairs, mask)
    if perfect_epsilon and flip_prob > 0:
        flipped = [pair.model_copy(update={"epsilon": flip_prob}) for pair in flipped]
    return flipped, mask


def save_flip_mask(pairs: Sequence[PreferencePair], mask: NDArray[np.bool_], path: Path) -> None:
    """Write `example_id,flipped` rows."""
    frame = pd.DataFrame(
        {"example_id": [pair.example.example_id for pair in pairs], "flipped": mask.astype(np.int64)}
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def load_flip_mask(path: Path) -> NDArray[np.bool_]:
    """Read a mask written by `save_flip_mask`, in file order."""
    return pd.read_csv(path)["flipped"].to_numpy(dtype=bool)
