"""Commonly used conversion functions."""

from collections.abc import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray


def indices_of(index: Mapping[str, int], item_ids: Sequence[str]) -> NDArray[np.intp]:
    """Convert item IDs to catalogue row indices.

    Args:
        index: Mapping of item ID to row index.
        item_ids: Item IDs to convert.

    Raises:
        KeyError: If an item ID is not in the catalogue.

    Returns:
        Row indices in the same order as the IDs.
    """
    try:
        return np.fromiter((index[item_id] for item_id in item_ids), dtype=np.intp, count=len(item_ids))
    except KeyError as e:
        error_message = f'Unknown item "{e.args[0]}".'
        raise KeyError(error_message) from None


def derive_seed(seed: int, *keys: int) -> int:
    """Derive an independent child seed from a base seed and integer keys.

    Args:
        seed: Base seed.
        keys: Extra integers identifying the stream (example ID, salt, ...).

    Returns:
        Child seed as a non-negative integer.
    """
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint64)[0])


def format_fixed(value: float, places: int = 6) -> str:
    """Format a real number in fixed-point notation.

    Args:
        value: Number to format.
        places: Decimal places.

    Returns:
        Fixed-point string.
    """
    return f"{value:.{places}f}"


def parse_key_value(text: str) -> dict[str, str]:
    """Parse a plain-text `key = value` configuration.

    Blank lines and `#` comments are ignored.

    Args:
        text: Configuration text.

    Raises:
        ValueError: If a line is not a key-value pair or a key repeats.

    Returns:
        Mapping of keys to raw string values.
    """
    pairs: dict[str, str] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, separator, value = line.partition("=")
        if not separator or not key.strip():
            error_message = f"Line {line_number}: expected `key = value`, got {raw_line!r}."
            raise ValueError(error_message)
        key = key.strip()
        if key in pairs:
            error_message = f'Line {line_number}: duplicate key "{key}".'
            raise ValueError(error_message)
        pairs[key] = value.strip()
    return pairs


def format_key_value(pairs: Mapping[str, object]) -> str:
    """Format a mapping as a plain-text `key = value` configuration.

    Args:
        pairs: Mapping to format. `None` values are skipped.

    Returns:
        Configuration text with one pair per line.
    """
    return "".join(f"{key} = {value}\n" for key, value in pairs.items() if value is not None)
