import os
from dataclasses import dataclass, replace

SEED_ENV_VAR = "GAUGEMESH_SEED"


@dataclass(frozen=True)
class Settings:
    band_limit: int = 4
    nonlinearity_samples: int = 101
    history: int = 5
    rollout_steps: int = 3
    kernel_svd_threshold: float = 1e-8
    cg_tolerance: float = 1e-10
    power_iterations: int = 100
    dt_safety: float = 0.5
    l2_coefficient: float = 1e-5
    root_seed: int = 0


def get_settings() -> Settings:
    """Return Settings with defaults, honouring the root-seed environment override.

    Returns:
        Settings instance

    Raises:
        ValueError: If the seed override is not an integer
    """
    settings = Settings()
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return settings
    try:
        seed = int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None
    return replace(settings, root_seed=seed)
