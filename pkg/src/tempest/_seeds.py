import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 32-bit child seed for the stream named by ``keys``."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])
