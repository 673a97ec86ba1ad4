"""Counter-based random streams.

Every stream is a Philox-4x64 generator keyed by ``SeedSequence([seed, *keys])``,
so replicate ``r`` of a study seeded with ``s`` always sees the same draws no
matter how replicates are scheduled.
"""

import numpy as np

ALGORITHM = "philox4x64/seedsequence"


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))
