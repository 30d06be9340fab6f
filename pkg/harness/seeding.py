"""Every random draw of a run is keyed off one root seed."""
import os
import zlib

import numpy as np

from config.settings import SEED_ENV_VAR, get_settings


def resolve_root_seed(seed: int | None = None) -> int:
    """The environment override wins, then the configured seed, then the settings default."""
    if os.environ.get(SEED_ENV_VAR, "").strip():
        return get_settings().root_seed
    return get_settings().root_seed if seed is None else int(seed)


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def derive_seed(root: int, *keys) -> int:
    """Independent 32-bit seed for a named purpose, e.g. derive_seed(0, "init", "heat", 3)."""
    sequence = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key(k) for k in keys))
    return int(sequence.generate_state(1)[0])


def derive_rng(root: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *keys))
