from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from rosepo_lab.back_end.policy import (
    PARAMETER_ORDER,
    AdamState,
    Checkpoint,
    Gradients,
    PolicyModel,
    adam_step,
    catalogue_loss_and_grad,
    checkpoint_bytes,
    forward_scores,
    load_checkpoint,
    log_prob,
    save_checkpoint,
    sft_loss_and_grad,
)
from rosepo_lab.models.data import SequenceExample

ITEMS = ("a", "b", "c", "d", "e")
STEP = 1e-6


def _examples() -> list[SequenceExample]:
    histories = [("a", "b", "c", "d") * 2 + ("a", "b"), ("d", "c", "b", "a", "b") * 2, ("e", "e", "d", "d", "c") * 2]
    targets = ["e", "e", "a"]
    return [
        SequenceExample(
            example_id=index,
            user_id=f"u{index}",
            history=history,
            target=target,
            candidates=ITEMS,
            split="train",
            label_timestamp=index,
        )
        for index, (history, target) in enumerate(zip(histories, targets, strict=True))
    ]


def _trained_looking_model() -> PolicyModel:
    # Larger weights than the default init make every path through the block contribute.
    model = PolicyModel.initialize(ITEMS, width=8, seed=3)
    rng = np.random.default_rng(4)
    for name, value in model.params.items():
        value += rng.normal(0.0, 0.3, size=value.shape)
    return model


def _check_gradients(model: PolicyModel, loss_fn: Callable[[], tuple[float, Gradients]]) -> None:
    _, grads = loss_fn()
    rng = np.random.default_rng(0)
    for name in PARAMETER_ORDER:
        value = model.params[name]
        flat = value.reshape(-1)
        for position in rng.choice(flat.size, size=min(6, flat.size), replace=False):
            original = flat[position]
            flat[position] = original + STEP
            upper, _ = loss_fn()
            flat[position] = original - STEP
            lower, _ = loss_fn()
            flat[position] = original
            numeric = (upper - lower) / (2 * STEP)
            analytic = grads[name].reshape(-1)[position]
            assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-8), name


def test_sft_gradient_matches_finite_differences() -> None:
    model = _trained_looking_model()
    batch = _examples()

    _check_gradients(model, lambda: sft_loss_and_grad(model, batch))


def test_catalogue_gradient_matches_finite_differences() -> None:
    model = _trained_looking_model()
    batch = _examples()
    histories = np.stack([model.rows(example.history) for example in batch])
    targets = model.rows([example.target for example in batch])

    _check_gradients(model, lambda: catalogue_loss_and_grad(model, histories, targets))


def test_log_prob_is_normalized() -> None:
    model = _trained_looking_model()
    example = _examples()[0]

    total = sum(np.exp(log_prob(model, example, item)) for item in ITEMS)

    assert total == pytest.approx(1.0, abs=1e-12)
    assert all(log_prob(model, example, item) <= 0 for item in ITEMS)
    with pytest.raises(ValueError, match="not a candidate"):
        _ = log_prob(model, example.model_copy(update={"candidates": ("a", "e")}), "b")


def test_forward_scores_checks_history() -> None:
    model = _trained_looking_model()

    with pytest.raises(ValueError, match="10 items"):
        _ = forward_scores(model, ["a"], ["b"])
    with pytest.raises(KeyError, match="zz"):
        _ = forward_scores(model, ["a"] * 10, ["zz"])


def test_batch_and_single_scores_agree() -> None:
    model = _trained_looking_model()
    batch = _examples()
    loss, _ = sft_loss_and_grad(model, batch)

    single = -np.mean([log_prob(model, example, example.target) for example in batch])

    assert loss == pytest.approx(single, abs=1e-12)


def test_permuting_candidates_permutes_scores() -> None:
    model = _trained_looking_model()
    history = _examples()[0].history
    order = [3, 0, 4, 1, 2]

    scores = forward_scores(model, history, ITEMS)
    permuted = forward_scores(model, history, [ITEMS[index] for index in order])

    np.testing.assert_allclose(permuted, scores[order], rtol=0, atol=1e-12)


def test_zero_item_embeddings_score_zero() -> None:
    model = _trained_looking_model()
    model.params["item_embeddings"][:] = 0.0

    scores = forward_scores(model, _examples()[1].history, ITEMS)

    np.testing.assert_array_equal(scores, np.zeros(len(ITEMS)))


def test_initialization_is_seeded() -> None:
    first = PolicyModel.initialize(ITEMS, width=8, seed=1)

    assert first.checksum() == PolicyModel.initialize(ITEMS, width=8, seed=1).checksum()
    assert first.checksum() != PolicyModel.initialize(ITEMS, width=8, seed=2).checksum()


def test_adam_rejects_non_finite_gradient_without_mutating() -> None:
    model = _trained_looking_model()
    _, grads = sft_loss_and_grad(model, _examples())
    grads["query"] = grads["query"].copy()
    grads["query"][0, 0] = np.nan
    before = model.checksum()

    with pytest.raises(FloatingPointError, match="query"):
        _ = adam_step(model, grads, AdamState(), lr=1e-3)
    assert model.checksum() == before


def test_first_adam_step_moves_each_parameter_by_lr() -> None:
    model = _trained_looking_model()
    before = {name: value.copy() for name, value in model.params.items()}
    ones = {name: np.ones_like(value) for name, value in model.params.items()}

    _ = adam_step(model, ones, AdamState(), lr=1e-3)

    for name, value in model.params.items():
        np.testing.assert_allclose(before[name] - value, 1e-3, rtol=1e-6, err_msg=name)


def test_zero_gradient_leaves_parameters_unchanged() -> None:
    model = _trained_looking_model()
    zeros = {name: np.zeros_like(value) for name, value in model.params.items()}
    before = model.checksum()

    state = adam_step(model, zeros, AdamState(), lr=1e-2)

    assert model.checksum() == before
    assert state.step == 1


def test_adam_reduces_loss() -> None:
    model = _trained_looking_model()
    batch = _examples()
    state = AdamState()
    start, _ = sft_loss_and_grad(model, batch)

    for _ in range(30):
        _, grads = sft_loss_and_grad(model, batch)
        state = adam_step(model, grads, state, lr=1e-2)

    end, _ = sft_loss_and_grad(model, batch)
    assert end < start
    assert state.step == 30


def test_checkpoint_round_trip(tmp_path: Path) -> None:
    model = _trained_looking_model()
    checkpoint = Checkpoint.of(model, "sft", seed=5, steps=12)
    path = tmp_path / "nested" / "sft.ckpt"

    save_checkpoint(checkpoint, path)
    loaded = load_checkpoint(path)

    assert loaded.meta == checkpoint.meta
    assert loaded.model.checksum() == model.checksum()
    assert checkpoint_bytes(loaded) == path.read_bytes()


def test_checkpoint_rejects_foreign_and_truncated_files(tmp_path: Path) -> None:
    foreign = tmp_path / "foreign.ckpt"
    _ = foreign.write_bytes(b"nope")
    truncated = tmp_path / "truncated.ckpt"
    _ = truncated.write_bytes(checkpoint_bytes(Checkpoint.of(_trained_looking_model(), "po", 0, 0))[:200])

    with pytest.raises(ValueError, match="not a checkpoint"):
        _ = load_checkpoint(foreign)
    with pytest.raises(ValueError, match="truncated"):
        _ = load_checkpoint(truncated)


def test_checkpoint_rejects_other_major_version(tmp_path: Path) -> None:
    checkpoint = Checkpoint.of(_trained_looking_model(), "sft", 0, 0)
    old = Checkpoint(checkpoint.model, checkpoint.meta.model_copy(update={"version": "0.4.2"}))
    path = tmp_path / "old.ckpt"
    save_checkpoint(old, path)

    with pytest.raises(ValueError, match="incompatible"):
        _ = load_checkpoint(path)
