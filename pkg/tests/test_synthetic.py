from pathlib import Path

import numpy as np
import pytest

from rosepo_lab.back_end.dataset import ingest, window_and_split
from rosepo_lab.back_end.prefdata import build_preferences
from rosepo_lab.back_end.synthetic import (
    GROUND_TRUTH_FILE,
    INTERACTIONS_FILE,
    ITEMS_FILE,
    apply_flip_mask,
    generate,
    inject_flips,
    load_flip_mask,
    load_ground_truth,
    save_flip_mask,
    write_synthetic,
    zipf_weights,
)
from rosepo_lab.models.config import SyntheticSpec
from rosepo_lab.models.data import PreferencePair, SequenceExample
from rosepo_lab.utils.base_sampler import SamplingContext

SMALL = SyntheticSpec(n_users=20, n_items=40, sequence_length=12, clusters=4, seed=1)


@pytest.fixture
def clean_pairs(
    examples: list[SequenceExample], catalogue: tuple[str, ...], records: dict[str, frozenset[str]]
) -> list[PreferencePair]:
    return build_preferences(examples, "uniform", SamplingContext(catalogue, records), seed=0)


def test_generate_shapes() -> None:
    data = generate(SMALL)
    interactions = data.interactions

    assert len(interactions) == 20 * 12
    assert list(interactions.columns) == ["user_id", "item_id", "rating", "timestamp"]
    assert interactions["timestamp"].is_unique
    assert bool((interactions.groupby("user_id")["item_id"].nunique() == 12).all())
    assert list(data.items["item_id"]) == sorted(data.items["item_id"])
    assert data.vectors.shape == (40, 32)
    assert sorted(data.kernel.values()) == sorted(data.kernel)


def test_generate_is_seeded() -> None:
    assert generate(SMALL).interactions.equals(generate(SMALL).interactions)
    assert not generate(SMALL).interactions.equals(generate(SMALL.model_copy(update={"seed": 2})).interactions)


def test_full_rho_follows_the_kernel() -> None:
    data = generate(SMALL.model_copy(update={"rho": 1.0}))

    for _, rows in data.interactions.sort_values("timestamp").groupby("user_id"):
        items = list(rows["item_id"])
        assert all(data.kernel[current] == following for current, following in zip(items, items[1:], strict=False))


def test_clusters_share_embeddings() -> None:
    data = generate(SMALL)
    unit = data.vectors / np.linalg.norm(data.vectors, axis=1, keepdims=True)
    same = data.clusters[:, None] == data.clusters[None, :]

    assert float((unit @ unit.T)[same].min()) > 0.99


def test_zipf_weights() -> None:
    weights = zipf_weights(10, 1.0, np.random.default_rng(0))

    assert weights.sum() == pytest.approx(1.0)
    assert sorted(weights, reverse=True)[0] / sorted(weights)[0] == pytest.approx(10.0)
    np.testing.assert_allclose(zipf_weights(5, 0.0, np.random.default_rng(0)), 0.2)


def test_written_dataset_can_be_prepared(tmp_path: Path) -> None:
    data = generate(SMALL)

    write_synthetic(data, tmp_path)
    dataset = ingest(tmp_path / INTERACTIONS_FILE, tmp_path / ITEMS_FILE, min_rating=0)

    assert load_ground_truth(tmp_path / GROUND_TRUTH_FILE) == data.kernel
    assert len(window_and_split(dataset)) == 20 * (12 - 10)


def test_ground_truth_rejects_malformed_rows(tmp_path: Path) -> None:
    path = tmp_path / GROUND_TRUTH_FILE
    _ = path.write_text("i00\ti01\nbroken\n", encoding="utf-8")

    with pytest.raises(ValueError, match="line 2"):
        _ = load_ground_truth(path)


def test_synthetic_spec_validation() -> None:
    with pytest.raises(ValueError, match="19 unseen"):
        _ = SyntheticSpec(n_items=30, sequence_length=12)
    with pytest.raises(ValueError, match="clusters"):
        _ = SyntheticSpec(n_items=40, sequence_length=12, clusters=50)
    with pytest.raises(ValueError, match="rho"):
        _ = SyntheticSpec(rho=1.5)


def test_flip_mask_is_an_involution(clean_pairs: list[PreferencePair]) -> None:
    mask = np.arange(len(clean_pairs)) % 3 == 0

    flipped = apply_flip_mask(clean_pairs, mask)

    assert apply_flip_mask(flipped, mask) == clean_pairs
    for pair, original, flip in zip(flipped, clean_pairs, mask, strict=True):
        expected = (original.rejected, original.chosen) if flip else (original.chosen, original.rejected)
        assert (pair.chosen, pair.rejected) == expected
    with pytest.raises(ValueError, match="entries"):
        _ = apply_flip_mask(clean_pairs, mask[:-1])


def test_flip_rate_is_respected(clean_pairs: list[PreferencePair]) -> None:
    many = clean_pairs * 125

    noisy, mask = inject_flips(many, 0.3, seed=0)

    # 2000 draws: four standard deviations is about 0.04.
    assert abs(float(mask.mean()) - 0.3) < 0.04
    assert all(pair.epsilon is None for pair in noisy)
    assert np.array_equal(inject_flips(many, 0.3, seed=0)[1], mask)


def test_no_flips_at_zero(clean_pairs: list[PreferencePair]) -> None:
    noisy, mask = inject_flips(clean_pairs, 0.0, seed=4, perfect_epsilon=True)

    assert noisy == clean_pairs
    assert not mask.any()


def test_perfect_epsilon(clean_pairs: list[PreferencePair]) -> None:
    noisy, _ = inject_flips(clean_pairs, 0.2, seed=4, perfect_epsilon=True)

    assert {pair.epsilon for pair in noisy} == {0.2}


def test_flip_probability_bounds(clean_pairs: list[PreferencePair]) -> None:
    for bad in (-0.1, 0.5):
        with pytest.raises(ValueError, match=r"\[0, 0.5\)"):
            _ = inject_flips(clean_pairs, bad, seed=0)


def test_flip_mask_file(tmp_path: Path, clean_pairs: list[PreferencePair]) -> None:
    _, mask = inject_flips(clean_pairs, 0.4, seed=1)
    path = tmp_path / "flip_mask.csv"

    save_flip_mask(clean_pairs, mask, path)

    np.testing.assert_array_equal(load_flip_mask(path), mask)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "example_id,flipped"
