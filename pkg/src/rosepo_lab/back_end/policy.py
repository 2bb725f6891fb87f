"""Attention-based next-item policy with hand-written backpropagation.

One pre-norm transformer block (single head) over the embedded 10-item history, a final layer norm, and scores as dot
products with item embeddings. Only the last position's output is used, so attention is computed for the last query
against every history position; this equals the last row of causal self-attention.

Parameter order (also the checkpoint blob order):
    item_embeddings (N, d), position_embeddings (10, d), ln1_gain, ln1_bias (d,), query, key, value, output (d, d),
    ln2_gain, ln2_bias (d,), ff_in (d, 4d), ff_in_bias (4d,), ff_out (4d, d), ff_out_bias (d,), lnf_gain, lnf_bias (d,)

Usage:
    ```python
    model = PolicyModel.initialize(catalogue, width=64, seed=0)
    scores = forward_scores(model, example.history, example.candidates)
    loss, grads = sft_loss_and_grad(model, batch)
    state = adam_step(model, grads, state, lr=1e-3)
    ```
"""

import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path
from typing import final

import numpy as np
from numpy.typing import NDArray
from packaging.version import parse
from scipy.special import logsumexp, softmax

from rosepo_lab.__about__ import __version__
from rosepo_lab.models.data import CheckpointMeta, SequenceExample, Stage
from rosepo_lab.utils.constants import CHECKPOINT_FORMAT, CHECKPOINT_MAGIC, HISTORY_LENGTH
from rosepo_lab.utils.converters import indices_of

Array = NDArray[np.float64]
Gradients = dict[str, Array]

LAYER_NORM_EPS = 1e-5
INIT_STD = 0.02
GELU_SCALE = float(np.sqrt(2 / np.pi))
GELU_CUBIC = 0.044715

PARAMETER_ORDER = (
    "item_embeddings",
    "position_embeddings",
    "ln1_gain",
    "ln1_bias",
    "query",
    "key",
    "value",
    "output",
    "ln2_gain",
    "ln2_bias",
    "ff_in",
    "ff_in_bias",
    "ff_out",
    "ff_out_bias",
    "lnf_gain",
    "lnf_bias",
)


def parameter_shapes(items: int, width: int) -> dict[str, tuple[int, ...]]:
    """Shapes of every parameter for a catalogue size and model width."""
    hidden = 4 * width
    return {
        "item_embeddings": (items, width),
        "position_embeddings": (HISTORY_LENGTH, width),
        "ln1_gain": (width,),
        "ln1_bias": (width,),
        "query": (width, width),
        "key": (width, width),
        "value": (width, width),
        "output": (width, width),
        "ln2_gain": (width,),
        "ln2_bias": (width,),
        "ff_in": (width, hidden),
        "ff_in_bias": (hidden,),
        "ff_out": (hidden, width),
        "ff_out_bias": (width,),
        "lnf_gain": (width,),
        "lnf_bias": (width,),
    }


@final
class PolicyModel:
    """Trainable next-item scorer. The same class serves as frozen reference and as preference oracle."""

    def __init__(self, item_ids: Sequence[str], params: dict[str, Array]) -> None:
        """Wrap parameters for a catalogue.

        Args:
            item_ids: Catalogue in row order.
            params: Parameter arrays keyed by `PARAMETER_ORDER` names.

        Raises:
            ValueError: If a parameter is missing or misshapen.
        """
        self.item_ids = tuple(item_ids)
        self.index = {item_id: row for row, item_id in enumerate(self.item_ids)}
        self.width = int(params["position_embeddings"].shape[1])
        expected = parameter_shapes(len(self.item_ids), self.width)
        for name, shape in expected.items():
            if name not in params or params[name].shape != shape:
                error_message = f"Parameter {name} should have shape {shape}."
                raise ValueError(error_message)
        self.params = {name: np.ascontiguousarray(params[name], dtype=np.float64) for name in PARAMETER_ORDER}

    @classmethod
    def initialize(cls, item_ids: Sequence[str], width: int, seed: int) -> "PolicyModel":
        """Seeded Gaussian initialization (std 0.02) with unit gains and zero biases.

        Args:
            item_ids: Catalogue in row order.
            width: Model width d.
            seed: Initialization seed.

        Returns:
            Fresh model.
        """
        rng = np.random.default_rng(seed)
        params: dict[str, Array] = {}
        for name, shape in parameter_shapes(len(item_ids), width).items():
            if name.endswith("_gain"):
                params[name] = np.ones(shape)
            elif name.endswith("_bias"):
                params[name] = np.zeros(shape)
            else:
                params[name] = rng.normal(0.0, INIT_STD, size=shape)
        return cls(item_ids, params)

    def clone(self) -> "PolicyModel":
        """Deep copy, used as the frozen reference."""
        return PolicyModel(self.item_ids, {name: value.copy() for name, value in self.params.items()})

    def rows(self, item_ids: Sequence[str]) -> NDArray[np.intp]:
        """Catalogue rows of items, raising a KeyError naming any unknown item."""
        return indices_of(self.index, item_ids)

    def blob(self) -> bytes:
        """Little-endian float64 parameter bytes in `PARAMETER_ORDER`."""
        return b"".join(self.params[name].astype("<f8").tobytes() for name in PARAMETER_ORDER)

    def checksum(self) -> str:
        """SHA-256 of the parameter blob."""
        return sha256(self.blob()).hexdigest()

    def is_finite(self) -> bool:
        """Whether every parameter is free of NaN and infinity."""
        return all(bool(np.isfinite(value).all()) for value in self.params.values())


@dataclass
class ForwardCache:
    """Intermediate activations kept for backpropagation."""

    histories: NDArray[np.intp]
    candidates: NDArray[np.intp] | None
    x: Array
    xhat1: Array
    rstd1: Array
    a: Array
    q: Array
    k: Array
    v: Array
    attention: Array
    context: Array
    h: Array
    xhat2: Array
    rstd2: Array
    f: Array
    u: Array
    gelu_u: Array
    h2: Array
    xhat3: Array
    rstd3: Array
    z: Array


@dataclass
class AdamState:
    """Adam moment estimates and step count."""

    step: int = 0
    first: Gradients = field(default_factory=dict)
    second: Gradients = field(default_factory=dict)


def _layer_norm(x: Array, gain: Array, bias: Array) -> tuple[Array, Array, Array]:
    mean = x.mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + LAYER_NORM_EPS)
    xhat = (x - mean) * rstd
    return xhat * gain + bias, xhat, rstd


def _layer_norm_backward(dxhat: Array, xhat: Array, rstd: Array) -> Array:
    return rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


def _gelu(u: Array) -> Array:
    return 0.5 * u * (1.0 + np.tanh(GELU_SCALE * (u + GELU_CUBIC * u**3)))


def _gelu_derivative(u: Array) -> Array:
    t = np.tanh(GELU_SCALE * (u + GELU_CUBIC * u**3))
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t**2) * GELU_SCALE * (1.0 + 3 * GELU_CUBIC * u**2)


def encode(model: PolicyModel, histories: NDArray[np.intp]) -> ForwardCache:
    """Sequence representations for a batch of histories.

    Args:
        model: Policy.
        histories: Catalogue rows of shape (batch, 10).

    Returns:
        Forward cache whose `z` holds the (batch, d) representations.
    """
    p = model.params
    if histories.ndim != 2 or histories.shape[1] != HISTORY_LENGTH:
        error_message = f"Histories must have shape (batch, {HISTORY_LENGTH}), got {histories.shape}."
        raise ValueError(error_message)
    x = p["item_embeddings"][histories] + p["position_embeddings"][None]
    a, xhat1, rstd1 = _layer_norm(x, p["ln1_gain"], p["ln1_bias"])
    q = a[:, -1] @ p["query"]
    k = a @ p["key"]
    v = a @ p["value"]
    attention = softmax(np.einsum("bd,bld->bl", q, k) / np.sqrt(model.width), axis=-1)
    context = np.einsum("bl,bld->bd", attention, v)
    h = x[:, -1] + context @ p["output"]
    f, xhat2, rstd2 = _layer_norm(h, p["ln2_gain"], p["ln2_bias"])
    u = f @ p["ff_in"] + p["ff_in_bias"]
    gelu_u = _gelu(u)
    h2 = h + gelu_u @ p["ff_out"] + p["ff_out_bias"]
    z, xhat3, rstd3 = _layer_norm(h2, p["lnf_gain"], p["lnf_bias"])
    return ForwardCache(
        histories, None, x, xhat1, rstd1, a, q, k, v, attention, context, h,
        xhat2, rstd2, f, u, gelu_u, h2, xhat3, rstd3, z,
    )


def batch_scores(
    model: PolicyModel, histories: NDArray[np.intp], candidates: NDArray[np.intp] | None
) -> tuple[Array, ForwardCache]:
    """Scores for a batch, either over per-example candidate rows or over the whole catalogue.

    Args:
        model: Policy.
        histories: Catalogue rows of shape (batch, 10).
        candidates: Catalogue rows of shape (batch, C), or None for every catalogue item.

    Returns:
        Scores of shape (batch, C) or (batch, N), and the forward cache.
    """
    cache = encode(model, histories)
    cache.candidates = candidates
    table = model.params["item_embeddings"]
    if candidates is None:
        return cache.z @ table.T, cache
    return np.einsum("bd,bcd->bc", cache.z, table[candidates]), cache


def backward(model: PolicyModel, cache: ForwardCache, d_scores: Array) -> Gradients:
    """Backpropagate score gradients through the block.

    Args:
        model: Policy the cache came from.
        cache: Forward cache.
        d_scores: Loss gradient with respect to the scores returned by `batch_scores`.

    Returns:
        Gradient per parameter.
    """
    p = model.params
    grads = {name: np.zeros_like(value) for name, value in p.items()}
    table = p["item_embeddings"]
    d_table = grads["item_embeddings"]

    # Scores.
    if cache.candidates is None:
        dz = d_scores @ table
        d_table += d_scores.T @ cache.z
    else:
        dz = np.einsum("bc,bcd->bd", d_scores, table[cache.candidates])
        np.add.at(d_table, cache.candidates, d_scores[..., None] * cache.z[:, None, :])

    # Final layer norm.
    grads["lnf_gain"] = (dz * cache.xhat3).sum(axis=0)
    grads["lnf_bias"] = dz.sum(axis=0)
    dh2 = _layer_norm_backward(dz * p["lnf_gain"], cache.xhat3, cache.rstd3)

    # Feed-forward with residual.
    grads["ff_out"] = cache.gelu_u.T @ dh2
    grads["ff_out_bias"] = dh2.sum(axis=0)
    du = (dh2 @ p["ff_out"].T) * _gelu_derivative(cache.u)
    grads["ff_in"] = cache.f.T @ du
    grads["ff_in_bias"] = du.sum(axis=0)
    df = du @ p["ff_in"].T
    grads["ln2_gain"] = (df * cache.xhat2).sum(axis=0)
    grads["ln2_bias"] = df.sum(axis=0)
    dh = dh2 + _layer_norm_backward(df * p["ln2_gain"], cache.xhat2, cache.rstd2)

    # Attention with residual.
    grads["output"] = cache.context.T @ dh
    d_context = dh @ p["output"].T
    d_attention = np.einsum("bd,bld->bl", d_context, cache.v)
    dv = np.einsum("bl,bd->bld", cache.attention, d_context)
    d_logits = cache.attention * (d_attention - (cache.attention * d_attention).sum(axis=-1, keepdims=True))
    d_logits /= np.sqrt(model.width)
    dq = np.einsum("bl,bld->bd", d_logits, cache.k)
    dk = np.einsum("bl,bd->bld", d_logits, cache.q)
    a_last = cache.a[:, -1]
    grads["query"] = a_last.T @ dq
    grads["key"] = np.einsum("bld,ble->de", cache.a, dk)
    grads["value"] = np.einsum("bld,ble->de", cache.a, dv)
    da = dk @ p["key"].T + dv @ p["value"].T
    da[:, -1] += dq @ p["query"].T

    # Input layer norm and embeddings.
    grads["ln1_gain"] = (da * cache.xhat1).sum(axis=(0, 1))
    grads["ln1_bias"] = da.sum(axis=(0, 1))
    dx = _layer_norm_backward(da * p["ln1_gain"], cache.xhat1, cache.rstd1)
    dx[:, -1] += dh
    grads["position_embeddings"] = dx.sum(axis=0)
    np.add.at(d_table, cache.histories, dx)
    return grads


def forward_scores(model: PolicyModel, history: Sequence[str], candidates: Sequence[str]) -> Array:
    """Score candidates for one history.

    Args:
        model: Policy.
        history: Exactly 10 item IDs, oldest first.
        candidates: Item IDs to score.

    Returns:
        One score per candidate, in candidate order.
    """
    if len(history) != HISTORY_LENGTH:
        error_message = f"History must hold {HISTORY_LENGTH} items, got {len(history)}."
        raise ValueError(error_message)
    scores, _ = batch_scores(model, model.rows(history)[None], model.rows(candidates)[None])
    return scores[0]


def log_prob(model: PolicyModel, example: SequenceExample, item: str) -> float:
    """Log-probability of an item under the softmax over the example's candidates.

    Args:
        model: Policy.
        example: Example supplying history and candidates.
        item: Candidate to evaluate.

    Raises:
        ValueError: If the item is not a candidate.

    Returns:
        log pi(item | example), at most zero.
    """
    if item not in example.candidates:
        error_message = f"Item {item} is not a candidate of example {example.example_id}."
        raise ValueError(error_message)
    scores = forward_scores(model, example.history, example.candidates)
    return float(scores[example.candidates.index(item)] - logsumexp(scores))


def example_arrays(model: PolicyModel, batch: Sequence[SequenceExample]) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    """Stack histories and candidates of equally sized examples into row arrays."""
    histories = np.stack([model.rows(example.history) for example in batch])
    candidates = np.stack([model.rows(example.candidates) for example in batch])
    return histories, candidates


def candidate_positions(batch: Sequence[SequenceExample], items: Sequence[str]) -> NDArray[np.intp]:
    """Position of each example's item within its candidate list."""
    return np.array([example.candidates.index(item) for example, item in zip(batch, items, strict=True)], dtype=np.intp)


def sft_loss_and_grad(model: PolicyModel, batch: Sequence[SequenceExample]) -> tuple[float, Gradients]:
    """Mean negative log-likelihood of the targets and its exact gradient.

    Args:
        model: Policy.
        batch: Nonempty examples with candidate lists of equal size.

    Returns:
        Loss and gradient per parameter.
    """
    if not batch:
        error_message = "SFT batch must not be empty."
        raise ValueError(error_message)
    histories, candidates = example_arrays(model, batch)
    targets = candidate_positions(batch, [example.target for example in batch])
    scores, cache = batch_scores(model, histories, candidates)
    log_probs = scores - logsumexp(scores, axis=1, keepdims=True)
    rows = np.arange(len(batch))
    loss = float(-log_probs[rows, targets].mean())
    d_scores = np.exp(log_probs)
    d_scores[rows, targets] -= 1.0
    d_scores /= len(batch)
    return loss, backward(model, cache, d_scores)


def catalogue_loss_and_grad(
    model: PolicyModel, histories: NDArray[np.intp], targets: NDArray[np.intp]
) -> tuple[float, Gradients]:
    """Mean next-item cross-entropy under the softmax over the whole catalogue.

    Args:
        model: Model to train.
        histories: Catalogue rows of shape (batch, 10).
        targets: Catalogue row of each target.

    Returns:
        Loss and gradient per parameter.
    """
    scores, cache = batch_scores(model, histories, None)
    log_probs = scores - logsumexp(scores, axis=1, keepdims=True)
    rows = np.arange(len(targets))
    loss = float(-log_probs[rows, targets].mean())
    d_scores = np.exp(log_probs)
    d_scores[rows, targets] -= 1.0
    d_scores /= len(targets)
    return loss, backward(model, cache, d_scores)


def adam_step(
    model: PolicyModel,
    grads: Gradients,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> AdamState:
    """Apply one Adam update in place.

    Args:
        model: Policy to update.
        grads: Gradient per parameter.
        state: Optimizer state, updated in place.
        lr: Learning rate.
        weight_decay: L2 coefficient added to the gradient.
        betas: First and second moment decay rates.
        eps: Denominator guard.

    Raises:
        FloatingPointError: If any gradient is not finite; nothing is mutated.
        ValueError: If gradient shapes do not match.

    Returns:
        The updated state.
    """
    for name, value in model.params.items():
        grad = grads.get(name)
        if grad is None or grad.shape != value.shape:
            error_message = f"Gradient for {name} is missing or misshapen."
            raise ValueError(error_message)
        if not bool(np.isfinite(grad).all()):
            error_message = f"Non-finite gradient for {name} at optimizer step {state.step}."
            raise FloatingPointError(error_message)

    state.step += 1
    beta1, beta2 = betas
    for name, value in model.params.items():
        grad = grads[name] + weight_decay * value if weight_decay else grads[name]
        first = state.first.setdefault(name, np.zeros_like(value))
        second = state.second.setdefault(name, np.zeros_like(value))
        first *= beta1
        first += (1 - beta1) * grad
        second *= beta2
        second += (1 - beta2) * grad**2
        first_hat = first / (1 - beta1**state.step)
        second_hat = second / (1 - beta2**state.step)
        value -= lr * first_hat / (np.sqrt(second_hat) + eps)
    return state


# Checkpoints.


@dataclass(frozen=True)
class Checkpoint:
    """Parameters plus training metadata."""

    model: PolicyModel
    meta: CheckpointMeta

    @classmethod
    def of(cls, model: PolicyModel, stage: Stage, seed: int, steps: int) -> "Checkpoint":
        """Wrap a model with metadata for the current version."""
        meta = CheckpointMeta(
            version=__version__, stage=stage, seed=seed, steps=steps, width=model.width, item_ids=model.item_ids
        )
        return cls(model, meta)


HEADER = struct.Struct("<4sHIII")
LENGTH = struct.Struct("<I")


def checkpoint_bytes(checkpoint: Checkpoint) -> bytes:
    """Serialize: magic, format, d, catalogue size, history length, parameter blob, JSON metadata length and text."""
    model = checkpoint.model
    meta = checkpoint.meta.to_json_string().encode("utf-8")
    header = HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_FORMAT, model.width, len(model.item_ids), HISTORY_LENGTH)
    return header + model.blob() + LENGTH.pack(len(meta)) + meta


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    """Write a checkpoint file, creating parent directories."""
    path.parent.mkdir(parents=True, exist_ok=True)
    _ = path.write_bytes(checkpoint_bytes(checkpoint))


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint file.

    Raises:
        ValueError: If the file is not a checkpoint, is truncated, or comes from an incompatible major version.
    """
    data = path.read_bytes()
    if len(data) < HEADER.size or data[:4] != CHECKPOINT_MAGIC:
        error_message = f"{path} is not a checkpoint file."
        raise ValueError(error_message)
    _, file_format, width, items, history = HEADER.unpack_from(data)
    if file_format != CHECKPOINT_FORMAT or history != HISTORY_LENGTH:
        error_message = f"{path}: unsupported checkpoint format {file_format} (history {history})."
        raise ValueError(error_message)

    offset = HEADER.size
    params: dict[str, Array] = {}
    for name, shape in parameter_shapes(items, width).items():
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(data):
            error_message = f"{path} is truncated inside parameter {name}."
            raise ValueError(error_message)
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
        offset = end
    if offset + LENGTH.size > len(data):
        error_message = f"{path} is truncated before its metadata."
        raise ValueError(error_message)
    (meta_length,) = LENGTH.unpack_from(data, offset)
    meta = CheckpointMeta.model_validate_json(data[offset + LENGTH.size : offset + LENGTH.size + meta_length])

    if parse(meta.version).major != parse(__version__).major:
        error_message = f"{path} was written by version {meta.version}, incompatible with {__version__}."
        raise ValueError(error_message)
    if len(meta.item_ids) != items:
        error_message = f"{path}: metadata lists {len(meta.item_ids)} items, header says {items}."
        raise ValueError(error_message)
    return Checkpoint(PolicyModel(meta.item_ids, params), meta)
