import numpy as np
import pytest

import parmod


@pytest.fixture(scope="session")
def g0():
    return parmod.load_machine_file(parmod.g0_config_path())


@pytest.fixture(scope="session")
def g0_text():
    with open(parmod.g0_config_path(), "r", encoding="utf-8") as handle:
        return handle.read()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
