"""Deterministic RNG sub-streams derived from one root seed.

Each stochastic component draws from its own labeled stream, so enabling
or reconfiguring one feature never perturbs the draws of another.
"""

import numpy as np

# Fixed label table; never renumber (determinism contract across versions).
_LABELS = {
    "arrivals": 1,
    "origins": 2,
    "destinations": 3,
    "fleet": 4,
    "pricing": 5,
    "cruise": 6,
}


def derive_rng(root_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), _LABELS[label]]))
