"""Per-purpose random streams derived from one run seed.

Each purpose gets its own ``SeedSequence`` entropy tuple, so turning one
consumer on or off (say dropout) never shifts another's draws.
"""
import numpy as np

INIT = 1
DROPOUT = 2
BATCHING = 3
SYNTH = 4
ENCODER = 5
PROBE = 6
GRADCHECK = 7


def stream(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(purpose), *(int(e) for e in extra)])
