import re
import zlib

import numpy as np


def derive_seed(seed: int, *keys: str | int) -> int:
    """
    Derives an independent, reproducible seed from a master seed and a sequence of keys.

    Strings are hashed with CRC32 (stable across processes, unlike `hash`), then everything is mixed through
    numpy's `SeedSequence`.

    Args:
        seed: Nonnegative master seed.
        *keys: Dataset names, method names, indices, ...

    Returns:
        A 32-bit nonnegative seed.

    Raises:
        ValueError: If the master seed is negative.

    Example:
        >>> derive_seed(0, "jain", "tnf2") == derive_seed(0, "jain", "tnf2")
        True

    """

    if seed < 0:
        raise ValueError(f"seed must be nonnegative, but got {seed}.")

    entropy = [seed] + [zlib.crc32(key.encode()) if isinstance(key, str) else int(key) for key in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def dataset_slug(name: str) -> str:
    """
    Makes a file-name friendly identifier.

    Example:
        >>> dataset_slug("MNIST {3, 5, 8}")
        'mnist_3_5_8'

    """

    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_") or "dataset"
