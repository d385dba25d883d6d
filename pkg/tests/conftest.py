import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from segloc.descriptor import ARCHITECTURES, NetworkWeights


def random_weights(architecture_id: str, seed: int, scale=0.1) -> NetworkWeights:
    """Seeded random tensors with valid shapes for the given architecture."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in ARCHITECTURES[architecture_id].items():
        if name.endswith(".var"):
            arr = rng.uniform(0.5, 1.5, size=shape)
        elif name.endswith(".gamma"):
            arr = rng.uniform(0.8, 1.2, size=shape)
        elif name.endswith((".mean", ".beta")):
            arr = rng.normal(0.0, 0.05, size=shape)
        else:
            arr = rng.normal(0.0, scale, size=shape)
        tensors[name] = arr.astype(np.float32)
    return NetworkWeights(tensors=tensors, architecture_id=architecture_id)


def zero_weights(architecture_id: str) -> NetworkWeights:
    tensors = {}
    for name, shape in ARCHITECTURES[architecture_id].items():
        if name.endswith(".var"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    return NetworkWeights(tensors=tensors, architecture_id=architecture_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
