"""Helper utility functions."""

from typing import List, Union

import numpy as np
import xxhash

SEED_MASK = (1 << 64) - 1

SeedLike = Union[int, np.random.Generator]


def derive_seed(*parts: object) -> int:
    """
    Derive a 64-bit sub-seed from arbitrary labelled parts.

    The parts are joined into a string and hashed with 128-bit XXH3; the low
    64 bits are kept. Changing one part never changes the seeds of others.

    Args:
        parts: Values identifying the stream (root seed, method, trial, ...)

    Returns:
        Unsigned 64-bit integer seed
    """
    key = "|".join(str(part) for part in parts)
    return xxhash.xxh3_128(key.encode("utf-8")).intdigest() & SEED_MASK


def as_generator(seed: SeedLike) -> np.random.Generator:
    """
    Turn an integer seed (or an existing generator) into a numpy Generator.

    Negative integers are reinterpreted as unsigned 64-bit values.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed) & SEED_MASK)


def parse_int_list(text: str) -> List[int]:
    """
    Parse a comma separated list of integers, accepting ``1e5``-style values.

    Raises:
        ValueError: If an entry is not a whole number
    """
    values = []
    for token in text.split(","):
        token = token.strip().replace("_", "")
        if not token:
            continue
        number = float(token)
        if not number.is_integer():
            raise ValueError(f"Expected an integer, got '{token}'")
        values.append(int(number))
    if not values:
        raise ValueError("Expected at least one integer")
    return values


def parse_name_list(text: str) -> List[str]:
    """Parse a comma separated list of names, dropping blanks."""
    return [token.strip() for token in text.split(",") if token.strip()]
