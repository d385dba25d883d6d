import sys
from pathlib import Path

import numpy as np
import pytest

# The mapping runtime lives in the sibling package; its CLI is the external
# interface the export tests drive.
RUNTIME_SRC = Path(__file__).resolve().parents[2] / "src"


@pytest.fixture
def rng():
    return np.random.default_rng(424242)


@pytest.fixture(scope="session")
def runtime_env():
    import os
    env = dict(os.environ)
    env["PYTHONPATH"] = str(RUNTIME_SRC) + os.pathsep + env.get("PYTHONPATH", "")
    return env
