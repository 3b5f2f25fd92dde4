import numpy as np
import pytest

from qibf.config import load_config
from qibf.model import LinearGaussianModel
from qibf.quantizer import build_uniform_midrise


@pytest.fixture(scope="session")
def case2_config():
    return load_config("case2")


@pytest.fixture(scope="session")
def case1_config():
    return load_config("case1")


@pytest.fixture(scope="session")
def case2_model(case2_config):
    return case2_config.model


@pytest.fixture(scope="session")
def case1_model(case1_config):
    return case1_config.model


@pytest.fixture(scope="session")
def case_quantizer():
    """3-bit mid-rise quantizer saturating at 0.6222."""
    return build_uniform_midrise(3, 0.6222)


def stretch(model, horizon):
    """Constant model extended to a longer horizon."""
    return LinearGaussianModel.constant(
        model.A_seq[0], model.B_seq[0], model.C_seq[0], model.Q_seq[0],
        model.R_seq[0], model.x0_mean, model.x0_cov, horizon, name=model.name,
    )


@pytest.fixture(scope="session")
def case2_long(case2_model):
    return stretch(case2_model, 20)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
