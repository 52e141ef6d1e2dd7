import numpy as np
import pytest

from splab.energy import FractionalParams
from splab.patches import PatchModel


@pytest.fixture(scope="session")
def params_main() -> FractionalParams:
    return FractionalParams(s=0.4, p=2.5)


@pytest.fixture(scope="session")
def model_main(params_main) -> PatchModel:
    return PatchModel(params_main, workers=2)


@pytest.fixture(scope="session")
def rng() -> np.random.Generator:
    return np.random.default_rng(20240)
