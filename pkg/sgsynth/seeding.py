"""Counter-based random streams derived from one master seed."""
import numpy as np

ENVIRONMENT_STREAM = 0
POPULATION_STREAM = 1
SESSION_STREAM = 2
SURVEY_STREAM = 3
CHAIN_STREAM = 4
GRID_STREAM = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (stage, index, ...) key under the master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def derive_seed(seed: int, *key: int) -> int:
    """Integer seed for a sub-run, stable under any scheduling order."""
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)).generate_state(1, dtype=np.uint32)
    return int(state[0])
