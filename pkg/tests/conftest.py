import os

import pytest

from zml_dynamics import Model
from zml_util import Config

BIPED_MODEL_PATH = os.path.join(Config.CONFIG_DIRECTORY, "robot-biped10.yml")
DESK_MODEL_PATH = os.path.join(Config.CONFIG_DIRECTORY, "robot-desk21.yml")
SLOW_TESTS_ENV_VAR = "ZMLLOCO_SLOW_TESTS"


def pytest_collection_modifyitems(config, items):
    if os.getenv(SLOW_TESTS_ENV_VAR) == "1":
        return
    skip_slow = pytest.mark.skip(reason="set {}=1 to run".format(SLOW_TESTS_ENV_VAR))
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def biped():
    return Model.load_model(BIPED_MODEL_PATH)


@pytest.fixture(scope="session")
def desk():
    return Model.load_model(DESK_MODEL_PATH)


@pytest.fixture
def biped_config():
    """
    Default run config on the 10-DOF biped with randomization switched off.
    """
    return Config.load_run_config(
        overrides=[
            "robot_model={}".format(BIPED_MODEL_PATH),
            "randomization.enabled=false",
            "randomization.action_noise=0.0",
        ]
    )
